//! Compares every aggregate computed by the analytics module on a corpus
//! with the brute-force recomputation in [`crate::oracle`].

use routescope::analytics::{
    bucket_rtt_series, crossing_table, hop_count_stats, link_shares, mean_rtt_cdf, CrossingOptions,
    CrossingRow, Grouping, HOUR_US,
};
use routescope::store::PingRecord;

use crate::corpus::Corpus;
use crate::oracle;

macro_rules! ensure_eq {
    ($got:expr, $want:expr, $what:expr) => {{
        let (g, w) = (&$got, &$want);
        if g != w {
            return Err(format!("{}: got {:?}, want {:?}", $what, g, w));
        }
    }};
}

fn compare_crossings(got: &[CrossingRow], want: &[oracle::CrossingRow]) -> Result<(), String> {
    ensure_eq!(got.len(), want.len(), "crossing row count");
    for (g, w) in got.iter().zip(want) {
        ensure_eq!(g.relation, w.relation, "relation");
        ensure_eq!((&g.from_group, &g.to_group), (&w.from, &w.to), "groups");
        ensure_eq!(
            (g.share.part, g.share.whole),
            (w.runs_with, w.runs_total),
            "share"
        );
        ensure_eq!(
            (g.mean_rtt.sum, g.mean_rtt.count),
            (w.rtt.sum, w.rtt.count),
            "mean RTT"
        );
        ensure_eq!(
            (g.q10_rtt, g.q90_rtt),
            (w.rtt.q10, w.rtt.q90),
            "RTT quantiles"
        );
    }
    Ok(())
}

/// Inter-AS and inter-country tables at `threshold_tenths / 10` percent,
/// hop statistics, hourly ping buckets and per-year CDFs of one corpus.
pub fn check_corpus(c: &Corpus, threshold_tenths: u64) -> Result<(), String> {
    let e = c.enricher();
    let threshold = threshold_tenths as f64 / 10.0;
    let obs: Vec<_> = c
        .relations
        .iter()
        .flat_map(|r| link_shares(r, &c.runs, &e))
        .collect();
    for (grouping, label) in [
        (Grouping::ByAs, &(|a| c.as_label(a)) as oracle::GroupFn<'_>),
        (Grouping::ByCountry, &|a| c.country(a)),
    ] {
        let got = crossing_table(
            &obs,
            CrossingOptions {
                grouping,
                threshold,
                exclude_implausible: false,
            },
        );
        let want = oracle::crossing_rows(&c.relations, &c.runs, label, threshold_tenths);
        compare_crossings(&got, &want).map_err(|m| format!("{grouping:?}: {m}"))?;
    }
    for rel in &c.relations {
        let got = hop_count_stats(rel, &c.runs);
        let want = oracle::hop_stats(rel, &c.runs);
        ensure_eq!(got.is_some(), want.is_some(), "hop stats presence");
        if let (Some(g), Some(w)) = (got, want) {
            ensure_eq!(
                (
                    g.min,
                    g.q10,
                    g.median,
                    g.q90,
                    g.max,
                    g.mean.sum,
                    g.mean.count
                ),
                (w.min, w.q10, w.median, w.q90, w.max, w.sum, w.count),
                "hop stats"
            );
        }
        let pings: Vec<PingRecord> = c
            .pings
            .iter()
            .filter(|p| p.source == rel.source_address && p.destination == rel.destination_address)
            .cloned()
            .collect();
        let series = bucket_rtt_series(&pings, HOUR_US);
        let want = oracle::buckets(&pings, HOUR_US);
        ensure_eq!(series.len(), want.len(), "bucket count");
        for (g, w) in series.iter().zip(&want) {
            ensure_eq!(
                (
                    g.bucket_start,
                    g.count as u64,
                    g.mean.sum,
                    g.min,
                    g.q10,
                    g.q90,
                    g.max
                ),
                (
                    w.start,
                    w.rtt.count,
                    w.rtt.sum,
                    w.rtt.min,
                    w.rtt.q10,
                    w.rtt.q90,
                    w.rtt.max
                ),
                "bucket"
            );
        }
        let cdf = mean_rtt_cdf(&series);
        let want = oracle::cdf(&want);
        ensure_eq!(
            cdf.keys().collect::<Vec<_>>(),
            want.keys().collect::<Vec<_>>(),
            "CDF years"
        );
        for (year, steps) in &cdf {
            let w = &want[year];
            ensure_eq!(steps.len(), w.len(), "CDF step count");
            for (g, w) in steps.iter().zip(w) {
                ensure_eq!(
                    (g.x.sum, g.x.count, g.at_or_below, g.total),
                    (w.sum, w.count, w.at_or_below, w.total),
                    "CDF step"
                );
            }
        }
    }
    Ok(())
}
