//! Canonical JSON interchange.
//!
//! Ping documents carry `timestamp, source, destination, status, rtt`;
//! traceroute documents carry `timestamp, source, destination, round, hops`,
//! each hop being `{hop, address, status, rtt}`. Absent optional fields are
//! omitted. A document is a traceroute run iff it has a `hops` member.

use std::io::{BufRead, Write};

use serde_json::Value;

use super::record::{PingRecord, Record, TracerouteRun};
use super::StoreError;

/// Serialize one record as a single canonical JSON line (no newline).
pub fn to_canonical_json(record: &Record) -> String {
    let result = match record {
        Record::Ping(p) => serde_json::to_string(p),
        Record::Traceroute(t) => serde_json::to_string(t),
    };
    // Serializing plain structs of integers and addresses cannot fail.
    result.expect("record serialization")
}

/// Parse and validate one JSON document.
pub fn parse_document(text: &str) -> Result<Record, String> {
    let value: Value = serde_json::from_str(text).map_err(|e| format!("malformed JSON: {e}"))?;
    parse_value(value)
}

pub fn parse_value(value: Value) -> Result<Record, String> {
    let Some(object) = value.as_object() else {
        return Err("document is not a JSON object".to_string());
    };
    let record = if object.contains_key("hops") {
        serde_path_to_error::deserialize::<_, TracerouteRun>(value)
            .map(Record::Traceroute)
            .map_err(|e| format!("{}: {}", e.path(), e.inner()))?
    } else {
        serde_path_to_error::deserialize::<_, PingRecord>(value)
            .map(Record::Ping)
            .map_err(|e| format!("{}: {}", e.path(), e.inner()))?
    };
    record.validate().map_err(|issues| {
        issues
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ")
    })?;
    Ok(record)
}

/// A document that was not accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    /// 1-based line number (newline-delimited input) or array index + 1.
    pub document: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedStream {
    pub records: Vec<Record>,
    pub rejected: Vec<Rejection>,
}

/// Parse newline-delimited or array-wrapped JSON.
///
/// Every document is either returned or reported; nothing is skipped silently.
pub fn parse_stream<R: BufRead>(mut reader: R) -> Result<ParsedStream, StoreError> {
    let first = loop {
        let buf = reader.fill_buf()?;
        if buf.is_empty() {
            return Ok(ParsedStream::default());
        }
        match buf.iter().position(|b| !b.is_ascii_whitespace()) {
            Some(i) => break buf[i],
            None => {
                let n = buf.len();
                reader.consume(n);
            }
        }
    };

    let mut out = ParsedStream::default();
    if first == b'[' {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        match serde_json::from_str::<Vec<Value>>(&text) {
            Ok(values) => {
                for (i, value) in values.into_iter().enumerate() {
                    match parse_value(value) {
                        Ok(r) => out.records.push(r),
                        Err(reason) => out.rejected.push(Rejection {
                            document: i + 1,
                            reason,
                        }),
                    }
                }
            }
            Err(e) => out.rejected.push(Rejection {
                document: 1,
                reason: format!("malformed JSON array: {e}"),
            }),
        }
        return Ok(out);
    }

    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match parse_document(trimmed) {
            Ok(r) => out.records.push(r),
            Err(reason) => out.rejected.push(Rejection {
                document: i + 1,
                reason,
            }),
        }
    }
    Ok(out)
}

/// Write records as canonical newline-delimited JSON.
pub fn write_ndjson<'a, W: Write>(
    mut writer: W,
    records: impl IntoIterator<Item = &'a Record>,
) -> Result<usize, StoreError> {
    let mut n = 0;
    for record in records {
        writer.write_all(to_canonical_json(record).as_bytes())?;
        writer.write_all(b"\n")?;
        n += 1;
    }
    writer.flush()?;
    Ok(n)
}
