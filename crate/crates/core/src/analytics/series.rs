use std::collections::BTreeMap;

use chrono::{DateTime, Datelike};
use serde::Serialize;

use super::stats::{Mean, Summary};
use crate::store::{HopStatus, PingRecord};

pub const HOUR_US: u64 = 3_600_000_000;

/// RTT statistics of one time bucket. All RTTs in µs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RttBucketStats {
    /// Bucket start, µs since the Unix epoch, a multiple of the bucket width.
    pub bucket_start: u64,
    pub count: usize,
    pub mean: Mean,
    pub min: u64,
    pub q10: u64,
    pub q90: u64,
    pub max: u64,
}

/// Echo-reply RTTs grouped into epoch-aligned buckets of `bucket_us`.
/// Timeouts do not contribute; empty buckets are skipped.
pub fn bucket_rtt_series<'a, I>(records: I, bucket_us: u64) -> Vec<RttBucketStats>
where
    I: IntoIterator<Item = &'a PingRecord>,
{
    assert!(bucket_us > 0, "bucket width must be positive");
    let mut buckets: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for r in records {
        if r.status != HopStatus::ECHO_REPLY {
            continue;
        }
        if let Some(rtt) = r.rtt {
            let start = r.timestamp - r.timestamp % bucket_us;
            buckets.entry(start).or_default().push(rtt);
        }
    }
    buckets
        .into_iter()
        .filter_map(|(bucket_start, sample)| {
            let s = Summary::of(sample)?;
            Some(RttBucketStats {
                bucket_start,
                count: s.count,
                mean: s.mean,
                min: s.min,
                q10: s.q10,
                q90: s.q90,
                max: s.max,
            })
        })
        .collect()
}

/// One step of an empirical CDF: `P(X <= x) = at_or_below / total`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CdfPoint {
    /// Bucket mean RTT in µs.
    pub x: Mean,
    pub at_or_below: usize,
    pub total: usize,
}

impl CdfPoint {
    pub fn y(&self) -> f64 {
        self.at_or_below as f64 / self.total as f64
    }
}

/// UTC calendar year of a µs timestamp.
pub fn utc_year(timestamp_us: u64) -> i32 {
    DateTime::from_timestamp_micros(timestamp_us as i64)
        .expect("timestamp within chrono range")
        .year()
}

/// Per-year empirical CDF over the bucket means of `series`.
/// Each distinct mean contributes one step; y reaches 1 at the largest.
pub fn mean_rtt_cdf(series: &[RttBucketStats]) -> BTreeMap<i32, Vec<CdfPoint>> {
    let mut by_year: BTreeMap<i32, Vec<Mean>> = BTreeMap::new();
    for b in series {
        by_year
            .entry(utc_year(b.bucket_start))
            .or_default()
            .push(b.mean);
    }
    by_year
        .into_iter()
        .map(|(year, mut means)| {
            means.sort();
            let total = means.len();
            let mut steps: Vec<CdfPoint> = Vec::new();
            for (i, m) in means.into_iter().enumerate() {
                match steps.last_mut() {
                    Some(last) if last.x == m => last.at_or_below = i + 1,
                    _ => steps.push(CdfPoint {
                        x: m,
                        at_or_below: i + 1,
                        total,
                    }),
                }
            }
            (year, steps)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const T0: u64 = 1_640_995_200_000_000; // 2022-01-01T00:00:00Z

    fn ping(ts: u64, rtt: Option<u64>) -> PingRecord {
        PingRecord {
            timestamp: ts,
            source: "10.0.0.1".parse().unwrap(),
            destination: "10.0.0.2".parse().unwrap(),
            status: if rtt.is_some() {
                HopStatus::ECHO_REPLY
            } else {
                HopStatus::TIMEOUT
            },
            rtt,
        }
    }

    #[test]
    fn constant_series() {
        let recs: Vec<_> = (0..100)
            .map(|i| ping(T0 + i * 1_000_000, Some(10_000)))
            .collect();
        let s = bucket_rtt_series(&recs, HOUR_US);
        assert_eq!(s.len(), 1);
        let b = &s[0];
        assert_eq!(
            (b.count, b.min, b.q10, b.q90),
            (100, 10_000, 10_000, 10_000)
        );
        assert_eq!(b.mean.format(1000, 2), "10.00");
    }

    #[test]
    fn one_to_hundred_ms() {
        let recs: Vec<_> = (1..=100)
            .rev()
            .map(|ms| ping(T0 + ms, Some(ms * 1000)))
            .collect();
        let b = &bucket_rtt_series(&recs, HOUR_US)[0];
        assert_eq!((b.q10, b.q90), (10_000, 90_000));
    }

    #[test]
    fn hour_boundary_splits() {
        let mut recs: Vec<_> = (0..7)
            .map(|i| ping(T0 + HOUR_US - 1 - i, Some(1)))
            .collect();
        recs.extend((0..5).map(|i| ping(T0 + HOUR_US + i, Some(2))));
        recs.push(ping(T0 + 5, None));
        let s = bucket_rtt_series(&recs, HOUR_US);
        assert_eq!(
            s.iter()
                .map(|b| (b.bucket_start, b.count))
                .collect::<Vec<_>>(),
            vec![(T0, 7), (T0 + HOUR_US, 5)]
        );
    }

    fn bucket(start: u64, mean_us: u64) -> RttBucketStats {
        RttBucketStats {
            bucket_start: start,
            count: 1,
            mean: Mean::of([mean_us]),
            min: mean_us,
            q10: mean_us,
            q90: mean_us,
            max: mean_us,
        }
    }

    #[test]
    fn cdf_steps() {
        let c = mean_rtt_cdf(&[bucket(T0, 7)]);
        assert_eq!(c[&2022][0].y(), 1.0);
        let c = mean_rtt_cdf(&[bucket(T0, 20_000), bucket(T0 + HOUR_US, 10_000)]);
        let pts: Vec<(f64, f64)> = c[&2022].iter().map(|p| (p.x.value(), p.y())).collect();
        assert_eq!(pts, vec![(10_000.0, 0.5), (20_000.0, 1.0)]);
        // 2021-12-31T23:00Z falls in the previous year.
        let c = mean_rtt_cdf(&[bucket(T0 - HOUR_US, 5), bucket(T0, 5)]);
        assert_eq!(c.keys().copied().collect::<Vec<_>>(), vec![2021, 2022]);
    }

    proptest! {
        #[test]
        fn splitting_and_merging_preserves_stats(
            rtts in prop::collection::vec((0u64..10_800_000_000, 1u64..500_000), 1..300),
            mask in prop::collection::vec(any::<bool>(), 300),
        ) {
            let recs: Vec<_> = rtts.iter().map(|&(t, r)| ping(T0 + t, Some(r))).collect();
            let (a, b): (Vec<_>, Vec<_>) = recs.iter().enumerate().partition(|(i, _)| mask[*i]);
            let merged: Vec<&PingRecord> = b.into_iter().chain(a).map(|(_, r)| r).collect();
            prop_assert_eq!(
                bucket_rtt_series(&recs, HOUR_US),
                bucket_rtt_series(merged, HOUR_US)
            );
        }

        #[test]
        fn cdf_is_monotone_to_one(means in prop::collection::vec(1u64..1000, 1..100)) {
            let series: Vec<_> = means.iter().enumerate().map(|(i, &m)| bucket(T0 + i as u64 * HOUR_US, m)).collect();
            let c = mean_rtt_cdf(&series);
            let pts = &c[&2022];
            prop_assert!(pts.windows(2).all(|w| w[0].x < w[1].x && w[0].at_or_below < w[1].at_or_below));
            prop_assert_eq!(pts.last().unwrap().at_or_below, means.len());
        }
    }
}
