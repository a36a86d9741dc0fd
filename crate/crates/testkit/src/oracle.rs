//! Naive recomputations written without the library's statistics helpers:
//! full sorts, linear scans, and integer-only calendar arithmetic.

use std::collections::{BTreeMap, HashMap};
use std::net::IpAddr;

use routescope::probe::RelationKey;
use routescope::store::{PingRecord, TracerouteRun};

/// 1-based nearest rank `ceil(p·n/100)` picked from a fully sorted copy.
pub fn percentile(values: &[u64], p: u64) -> u64 {
    let mut v = values.to_vec();
    v.sort();
    let n = v.len() as u64;
    let rank = (p * n).div_ceil(100).max(1);
    v[(rank - 1) as usize]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stats {
    pub count: u64,
    pub sum: u128,
    pub min: u64,
    pub q10: u64,
    pub median: u64,
    pub q90: u64,
    pub max: u64,
}

pub fn stats(values: &[u64]) -> Stats {
    Stats {
        count: values.len() as u64,
        sum: values.iter().map(|&v| v as u128).sum(),
        min: *values.iter().min().unwrap(),
        q10: percentile(values, 10),
        median: percentile(values, 50),
        q90: percentile(values, 90),
        max: *values.iter().max().unwrap(),
    }
}

/// Group label of an address, or `None` when it cannot be grouped.
pub type GroupFn<'a> = &'a dyn Fn(IpAddr) -> Option<String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossingRow {
    pub relation: RelationKey,
    pub from: String,
    pub to: String,
    pub rtt: Stats,
    pub runs_with: u64,
    pub runs_total: u64,
}

/// Crossing shares by direct enumeration of every run. `threshold_tenths`
/// is the percent threshold times ten.
pub fn crossing_rows(
    relations: &[RelationKey],
    runs: &[TracerouteRun],
    group: GroupFn<'_>,
    threshold_tenths: u64,
) -> Vec<CrossingRow> {
    let mut rows = Vec::new();
    for rel in relations {
        let mine: Vec<&TracerouteRun> = runs
            .iter()
            .filter(|r| r.source == rel.source_address && r.destination == rel.destination_address)
            .collect();
        // crossing -> one RTT per run (first occurrence along the path)
        let mut seen: BTreeMap<(String, String), Vec<u64>> = BTreeMap::new();
        for run in &mine {
            let mut in_this_run: Vec<(String, String)> = Vec::new();
            for i in 1..run.hops.len() {
                let (a, b) = (&run.hops[i - 1], &run.hops[i]);
                if b.hop != a.hop + 1 || a.status.0 == 0 || b.status.0 == 0 {
                    continue;
                }
                let (Some(x), Some(y), Some(_), Some(rtt)) = (a.address, b.address, a.rtt, b.rtt)
                else {
                    continue;
                };
                let (Some(gx), Some(gy)) = (group(x), group(y)) else {
                    continue;
                };
                if gx == gy || in_this_run.contains(&(gx.clone(), gy.clone())) {
                    continue;
                }
                in_this_run.push((gx.clone(), gy.clone()));
                seen.entry((gx, gy)).or_default().push(rtt);
            }
        }
        for ((from, to), rtts) in seen {
            let runs_with = rtts.len() as u64;
            let runs_total = mine.len() as u64;
            if runs_with * 1000 < threshold_tenths * runs_total {
                continue;
            }
            rows.push(CrossingRow {
                relation: rel.clone(),
                from,
                to,
                rtt: stats(&rtts),
                runs_with,
                runs_total,
            });
        }
    }
    rows.sort_by(|a, b| {
        a.relation
            .cmp(&b.relation)
            .then((b.runs_with * a.runs_total).cmp(&(a.runs_with * b.runs_total)))
            .then(a.from.cmp(&b.from))
            .then(a.to.cmp(&b.to))
    });
    rows
}

/// Hop count of every run that ended in an echo reply.
pub fn hop_stats(rel: &RelationKey, runs: &[TracerouteRun]) -> Option<Stats> {
    let counts: Vec<u64> = runs
        .iter()
        .filter(|r| r.source == rel.source_address && r.destination == rel.destination_address)
        .filter_map(|r| {
            r.hops
                .last()
                .filter(|h| h.status.0 == 255)
                .map(|h| h.hop as u64)
        })
        .collect();
    (!counts.is_empty()).then(|| stats(&counts))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bucket {
    pub start: u64,
    pub rtt: Stats,
}

pub fn buckets(pings: &[PingRecord], width: u64) -> Vec<Bucket> {
    let mut by: HashMap<u64, Vec<u64>> = HashMap::new();
    for p in pings {
        if p.status.0 == 255 {
            by.entry(p.timestamp / width)
                .or_default()
                .push(p.rtt.unwrap());
        }
    }
    let mut keys: Vec<u64> = by.keys().copied().collect();
    keys.sort();
    keys.into_iter()
        .map(|k| Bucket {
            start: k * width,
            rtt: stats(&by[&k]),
        })
        .collect()
}

/// Proleptic Gregorian year of a µs epoch timestamp.
pub fn year_of(timestamp_us: u64) -> i32 {
    let days = (timestamp_us / 86_400_000_000) as i64;
    // Civil-from-days on 400-year eras.
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    (yoe + era * 400 + i64::from(month <= 2)) as i32
}

/// One CDF step: mean as `(sum, count)`, and how many means are <= it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub sum: u128,
    pub count: u64,
    pub at_or_below: usize,
    pub total: usize,
}

pub fn cdf(buckets: &[Bucket]) -> BTreeMap<i32, Vec<Step>> {
    let mut years: BTreeMap<i32, Vec<(u128, u64)>> = BTreeMap::new();
    for b in buckets {
        years
            .entry(year_of(b.start))
            .or_default()
            .push((b.rtt.sum, b.rtt.count));
    }
    let le = |a: (u128, u64), b: (u128, u64)| a.0 * b.1 as u128 <= b.0 * a.1 as u128;
    years
        .into_iter()
        .map(|(y, means)| {
            let mut steps: Vec<Step> = Vec::new();
            for &m in &means {
                // Skip values equal to one already emitted.
                if steps
                    .iter()
                    .any(|s| le((s.sum, s.count), m) && le(m, (s.sum, s.count)))
                {
                    continue;
                }
                let below = means.iter().filter(|&&o| le(o, m)).count();
                steps.push(Step {
                    sum: m.0,
                    count: m.1,
                    at_or_below: below,
                    total: means.len(),
                });
            }
            steps.sort_by_key(|s| s.at_or_below);
            (y, steps)
        })
        .collect()
}
