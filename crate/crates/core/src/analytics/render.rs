use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::links::{CrossingRow, HopCountStats};
use super::series::{CdfPoint, RttBucketStats};
use super::stats::{format_ratio, ms2};
use crate::probe::RelationKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Text,
    Csv,
}

/// Header plus string cells; numeric columns are right-aligned in text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub headers: Vec<&'static str>,
    pub numeric: Vec<bool>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn render(&self, format: TableFormat) -> String {
        match format {
            TableFormat::Text => self.to_text(),
            TableFormat::Csv => self.to_csv(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: Vec<&str>| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .zip(&self.numeric)
                .map(|((c, &w), &num)| {
                    if num {
                        format!("{c:>w$}")
                    } else {
                        format!("{c:<w$}")
                    }
                })
                .collect();
            format!("{}\n", parts.join("  ").trim_end())
        };
        let mut out = line(self.headers.clone());
        for r in &self.rows {
            out += &line(r.iter().map(String::as_str).collect());
        }
        out
    }
}

/// Columns: IP, From ISP, To ISP, From, To, Mean, Q10 %, Q90 %, %.
pub fn crossing_table_rows(rows: &[CrossingRow]) -> Table {
    Table {
        headers: vec![
            "IP", "From ISP", "To ISP", "From", "To", "Mean", "Q10 %", "Q90 %", "%",
        ],
        numeric: vec![false, false, false, false, false, true, true, true, true],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.ip_version().label().to_string(),
                    r.relation.source_id.clone(),
                    r.relation.destination_id.clone(),
                    r.from_group.clone(),
                    r.to_group.clone(),
                    r.mean_rtt.format(1000, 2),
                    ms2(r.q10_rtt),
                    ms2(r.q90_rtt),
                    r.share.to_string(),
                ]
            })
            .collect(),
    }
}

/// Columns: IP, From ISP, To ISP, Min, Q10 %, Mean, Median, Q90 %.
pub fn hop_count_rows(stats: &[HopCountStats]) -> Table {
    let two = |v: u64| format_ratio(u128::from(v), 1, 2);
    Table {
        headers: vec![
            "IP", "From ISP", "To ISP", "Min", "Q10 %", "Mean", "Median", "Q90 %",
        ],
        numeric: vec![false, false, false, true, true, true, true, true],
        rows: stats
            .iter()
            .map(|s| {
                vec![
                    s.relation.ip_version.label().to_string(),
                    s.relation.source_id.clone(),
                    s.relation.destination_id.clone(),
                    s.min.to_string(),
                    two(s.q10),
                    s.mean.format(1, 2),
                    two(s.median),
                    two(s.q90),
                ]
            })
            .collect(),
    }
}

fn relation_cells(r: &RelationKey) -> [String; 3] {
    [
        r.ip_version.label().to_string(),
        r.source_id.clone(),
        r.destination_id.clone(),
    ]
}

/// RTTs in ms with three decimals, which is exact for µs inputs except
/// for the mean.
pub fn rtt_series_rows(series: &[(RelationKey, Vec<RttBucketStats>)]) -> Table {
    let ms3 = |us: u64| format_ratio(u128::from(us), 1000, 3);
    Table {
        headers: vec![
            "IP",
            "From ISP",
            "To ISP",
            "bucket_start",
            "count",
            "mean_ms",
            "min_ms",
            "q10_ms",
            "q90_ms",
            "max_ms",
        ],
        numeric: [vec![false; 3], vec![true; 7]].concat(),
        rows: series
            .iter()
            .flat_map(|(rel, buckets)| {
                buckets.iter().map(move |b| {
                    let mut row = relation_cells(rel).to_vec();
                    row.extend([
                        b.bucket_start.to_string(),
                        b.count.to_string(),
                        b.mean.format(1000, 3),
                        ms3(b.min),
                        ms3(b.q10),
                        ms3(b.q90),
                        ms3(b.max),
                    ]);
                    row
                })
            })
            .collect(),
    }
}

pub fn cdf_rows(cdfs: &[(RelationKey, BTreeMap<i32, Vec<CdfPoint>>)]) -> Table {
    Table {
        headers: vec![
            "IP",
            "From ISP",
            "To ISP",
            "year",
            "mean_rtt_ms",
            "fraction",
            "at_or_below",
            "total",
        ],
        numeric: [vec![false; 3], vec![true; 5]].concat(),
        rows: cdfs
            .iter()
            .flat_map(|(rel, cdf)| {
                cdf.iter().flat_map(move |(year, pts)| {
                    pts.iter().map(move |p| {
                        let mut row = relation_cells(rel).to_vec();
                        row.extend([
                            year.to_string(),
                            p.x.format(1000, 3),
                            format_ratio(p.at_or_below as u128, p.total as u128, 6),
                            p.at_or_below.to_string(),
                            p.total.to_string(),
                        ]);
                        row
                    })
                })
            })
            .collect(),
    }
}
