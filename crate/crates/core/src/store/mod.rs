//! Record model, append-only store and JSON interchange.
//!
//! A directory-backed store keeps one newline-delimited JSON segment per UTC
//! day, named `seg-<start_us>-<end_us>.ndjson`, plus an in-memory timestamp
//! index rebuilt on open. Records are never mutated or removed.

mod json;
mod record;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use thiserror::Error;

pub use json::{
    parse_document, parse_stream, parse_value, to_canonical_json, write_ndjson, ParsedStream,
    Rejection,
};
pub use record::{FieldIssue, Hop, HopStatus, PingRecord, Record, RecordKind, TracerouteRun};

use crate::probe::RelationKey;

/// Width of one segment file.
pub const SEGMENT_SPAN_US: u64 = 86_400 * 1_000_000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid record: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidRecord(Vec<FieldIssue>),
    #[error("corrupt segment {path}:{line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Anything that accepts measurement records from probe workers.
pub trait RecordSink: Send + Sync {
    fn accept(&self, record: Record) -> Result<(), StoreError>;
}

/// In-memory sink collecting records in arrival order.
#[derive(Debug, Default)]
pub struct VecSink(Mutex<Vec<Record>>);

impl VecSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn take(&self) -> Vec<Record> {
        std::mem::take(&mut *self.0.lock().expect("sink lock"))
    }

    pub fn len(&self) -> usize {
        self.0.lock().expect("sink lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl RecordSink for VecSink {
    fn accept(&self, record: Record) -> Result<(), StoreError> {
        self.0.lock().expect("sink lock").push(record);
        Ok(())
    }
}

/// Source/destination address filter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RelationFilter {
    pub source: Option<IpAddr>,
    pub destination: Option<IpAddr>,
}

impl RelationFilter {
    pub fn matches(&self, record: &Record) -> bool {
        self.source.is_none_or(|s| s == record.source())
            && self.destination.is_none_or(|d| d == record.destination())
    }
}

impl From<&RelationKey> for RelationFilter {
    fn from(key: &RelationKey) -> Self {
        Self {
            source: Some(key.source_address),
            destination: Some(key.destination_address),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreQuery {
    pub relation: RelationFilter,
    /// Half-open `[start, end)` in µs; empty when `start >= end`.
    pub start: u64,
    pub end: u64,
    pub kind: RecordKind,
}

impl StoreQuery {
    pub fn all(kind: RecordKind) -> Self {
        Self {
            relation: RelationFilter::default(),
            start: 0,
            end: u64::MAX,
            kind,
        }
    }

    pub fn range(kind: RecordKind, start: u64, end: u64) -> Self {
        Self {
            start,
            end,
            ..Self::all(kind)
        }
    }

    pub fn for_relation(mut self, relation: impl Into<RelationFilter>) -> Self {
        self.relation = relation.into();
        self
    }
}

#[derive(Default)]
struct Inner {
    records: Vec<Record>,
    pings: BTreeSet<(u64, usize)>,
    traceroutes: BTreeSet<(u64, usize)>,
    segments: BTreeMap<u64, BufWriter<File>>,
}

impl Inner {
    fn index(&mut self, record: Record) {
        let key = (record.timestamp(), self.records.len());
        match record.kind() {
            RecordKind::Ping => self.pings.insert(key),
            RecordKind::Traceroute => self.traceroutes.insert(key),
        };
        self.records.push(record);
    }

    fn ordered(&self) -> impl Iterator<Item = &Record> {
        let mut keys: Vec<(u64, usize)> = self
            .pings
            .iter()
            .chain(self.traceroutes.iter())
            .copied()
            .collect();
        keys.sort_unstable();
        keys.into_iter().map(move |(_, i)| &self.records[i])
    }
}

/// Append-only record store.
pub struct Store {
    root: Option<PathBuf>,
    inner: RwLock<Inner>,
}

impl Store {
    pub fn in_memory() -> Self {
        Self {
            root: None,
            inner: RwLock::new(Inner::default()),
        }
    }

    /// Open (or create) a directory-backed store and load its segments.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        let mut segments: Vec<(u64, PathBuf)> = fs::read_dir(&root)?
            .filter_map(|e| e.ok())
            .filter_map(|e| segment_start(&e.file_name().to_string_lossy()).map(|s| (s, e.path())))
            .collect();
        segments.sort();

        let mut inner = Inner::default();
        for (_, path) in segments {
            load_segment(&path, &mut inner)?;
        }
        Ok(Self {
            root: Some(root),
            inner: RwLock::new(inner),
        })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// Validate and append one record; durable once this returns.
    pub fn append(&self, record: Record) -> Result<(), StoreError> {
        self.append_all(std::iter::once(record))
    }

    /// Append many records, flushing once at the end. Validation happens
    /// before anything is written, so a bad record leaves the store untouched.
    pub fn append_all(&self, records: impl IntoIterator<Item = Record>) -> Result<(), StoreError> {
        let records: Vec<Record> = records.into_iter().collect();
        for r in &records {
            r.validate().map_err(StoreError::InvalidRecord)?;
        }
        let mut inner = self.inner.write().expect("store lock");
        if let Some(root) = &self.root {
            let mut touched = BTreeSet::new();
            for r in &records {
                let start = r.timestamp() - r.timestamp() % SEGMENT_SPAN_US;
                let writer = match inner.segments.entry(start) {
                    std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::btree_map::Entry::Vacant(e) => {
                        let file = OpenOptions::new()
                            .create(true)
                            .append(true)
                            .open(root.join(segment_name(start)))?;
                        e.insert(BufWriter::new(file))
                    }
                };
                writer.write_all(to_canonical_json(r).as_bytes())?;
                writer.write_all(b"\n")?;
                touched.insert(start);
            }
            for start in touched {
                if let Some(w) = inner.segments.get_mut(&start) {
                    w.flush()?;
                }
            }
        }
        for r in records {
            inner.index(r);
        }
        Ok(())
    }

    /// Matching records ordered by timestamp, ties in append order.
    pub fn query(&self, q: &StoreQuery) -> Vec<Record> {
        if q.start >= q.end {
            return Vec::new();
        }
        let inner = self.inner.read().expect("store lock");
        let index = match q.kind {
            RecordKind::Ping => &inner.pings,
            RecordKind::Traceroute => &inner.traceroutes,
        };
        index
            .range((q.start, 0)..(q.end, 0))
            .map(|&(_, i)| &inner.records[i])
            .filter(|r| q.relation.matches(r))
            .cloned()
            .collect()
    }

    pub fn count(&self, q: &StoreQuery) -> usize {
        if q.start >= q.end {
            return 0;
        }
        let inner = self.inner.read().expect("store lock");
        let index = match q.kind {
            RecordKind::Ping => &inner.pings,
            RecordKind::Traceroute => &inner.traceroutes,
        };
        index
            .range((q.start, 0)..(q.end, 0))
            .filter(|&&(_, i)| q.relation.matches(&inner.records[i]))
            .count()
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("store lock").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every record in canonical order (timestamp, then append order).
    pub fn snapshot(&self) -> Vec<Record> {
        self.inner
            .read()
            .expect("store lock")
            .ordered()
            .cloned()
            .collect()
    }

    /// Distinct (source, destination) pairs present in the store.
    pub fn relations(&self) -> BTreeSet<(IpAddr, IpAddr)> {
        let inner = self.inner.read().expect("store lock");
        inner
            .records
            .iter()
            .map(|r| (r.source(), r.destination()))
            .collect()
    }

    /// Import a JSON stream; valid documents are appended, the rest reported.
    pub fn import_json<R: BufRead>(&self, reader: R) -> Result<ImportReport, StoreError> {
        let parsed = parse_stream(reader)?;
        let accepted = parsed.records.len();
        self.append_all(parsed.records)?;
        Ok(ImportReport {
            accepted,
            rejected: parsed.rejected,
        })
    }

    /// Write the whole store as canonical newline-delimited JSON.
    pub fn export_json<W: Write>(&self, writer: W) -> Result<usize, StoreError> {
        let inner = self.inner.read().expect("store lock");
        write_ndjson(writer, inner.ordered())
    }
}

impl RecordSink for Store {
    fn accept(&self, record: Record) -> Result<(), StoreError> {
        self.append(record)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImportReport {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

fn segment_name(start: u64) -> String {
    format!("seg-{start}-{}.ndjson", start + SEGMENT_SPAN_US)
}

fn segment_start(name: &str) -> Option<u64> {
    let rest = name.strip_prefix("seg-")?.strip_suffix(".ndjson")?;
    let (start, end) = rest.split_once('-')?;
    let start: u64 = start.parse().ok()?;
    let end: u64 = end.parse().ok()?;
    (end == start + SEGMENT_SPAN_US).then_some(start)
}

fn load_segment(path: &Path, inner: &mut Inner) -> Result<(), StoreError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut line = String::new();
    let mut number = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        number += 1;
        if !line.ends_with('\n') {
            // Torn write from an interrupted append: it was never acknowledged.
            log::warn!(
                "{}:{number}: ignoring incomplete trailing record",
                path.display()
            );
            return Ok(());
        }
        let record = parse_document(line.trim_end()).map_err(|reason| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: number,
            reason,
        })?;
        inner.index(record);
    }
}
