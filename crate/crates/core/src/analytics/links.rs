use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;

use serde::Serialize;

use super::stats::{nearest_rank, Mean, Share, Summary};
use crate::enrich::{plausibility_filter, EnrichedHop, Enricher, Plausibility};
use crate::icmp::Family;
use crate::probe::RelationKey;
use crate::store::TracerouteRun;

/// First sighting of a link within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LinkSample {
    /// Index of the run within the relation's run list.
    pub run: usize,
    pub to_hop: u16,
    pub from_rtt: u64,
    pub to_rtt: u64,
}

/// A directed router-to-router link and the runs it was seen in.
/// Invariant: `samples` holds one entry per observing run, ascending by run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkObservation {
    pub relation: RelationKey,
    pub from: EnrichedHop,
    pub to: EnrichedHop,
    pub runs_total: usize,
    pub samples: Vec<LinkSample>,
    /// `None` when an endpoint has no location.
    pub plausibility: Option<Plausibility>,
}

impl LinkObservation {
    pub fn runs_observed(&self) -> usize {
        self.samples.len()
    }

    pub fn share(&self) -> Share {
        Share {
            part: self.samples.len() as u64,
            whole: self.runs_total as u64,
        }
    }

    pub fn rtt_samples_to_destination_side(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.to_rtt).collect()
    }

    pub fn is_inter_as(&self) -> bool {
        self.from.asn != self.to.asn
    }

    pub fn flagged_implausible(&self) -> bool {
        matches!(self.plausibility, Some(Plausibility::Implausible { .. }))
    }
}

fn belongs(relation: &RelationKey, run: &TracerouteRun) -> bool {
    run.source == relation.source_address && run.destination == relation.destination_address
}

/// Links between consecutive responding hops, with per-run presence.
///
/// Only runs of `relation` are considered and all of them count towards
/// `runs_total`, including runs in which nothing answered. A timeout
/// between two hops breaks the chain.
pub fn link_shares(
    relation: &RelationKey,
    runs: &[TracerouteRun],
    enricher: &Enricher,
) -> Vec<LinkObservation> {
    let runs: Vec<&TracerouteRun> = runs.iter().filter(|r| belongs(relation, r)).collect();
    let mut links: BTreeMap<(IpAddr, IpAddr), Vec<LinkSample>> = BTreeMap::new();
    for (i, run) in runs.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for w in run.hops.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if b.hop != a.hop + 1 || !a.status.responded() || !b.status.responded() {
                continue;
            }
            let (Some(from), Some(to), Some(from_rtt), Some(to_rtt)) =
                (a.address, b.address, a.rtt, b.rtt)
            else {
                continue;
            };
            if from != to && seen.insert((from, to)) {
                links.entry((from, to)).or_default().push(LinkSample {
                    run: i,
                    to_hop: b.hop,
                    from_rtt,
                    to_rtt,
                });
            }
        }
    }
    links
        .into_iter()
        .map(|((from, to), samples)| {
            let from = enricher.enrich(from);
            let to = enricher.enrich(to);
            let mut increases: Vec<u64> = samples
                .iter()
                .map(|s| s.to_rtt.saturating_sub(s.from_rtt))
                .collect();
            increases.sort_unstable();
            let typical = nearest_rank(&increases, 50).expect("link has a sample");
            let plausibility =
                plausibility_filter(from.geo.as_ref(), to.geo.as_ref(), typical as f64).ok();
            LinkObservation {
                relation: relation.clone(),
                from,
                to,
                runs_total: runs.len(),
                samples,
                plausibility,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// `asn: NAME` labels.
    ByAs,
    /// ISO country codes.
    ByCountry,
}

impl Grouping {
    pub fn group_of(self, hop: &EnrichedHop) -> Option<String> {
        match self {
            Grouping::ByAs => hop.as_label(),
            Grouping::ByCountry => hop.country().map(str::to_string),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingOptions {
    pub grouping: Grouping,
    /// Minimum share in percent.
    pub threshold: f64,
    pub exclude_implausible: bool,
}

/// Forwarding from one group into another for one relation.
/// RTTs in µs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CrossingRow {
    pub relation: RelationKey,
    pub from_group: String,
    pub to_group: String,
    pub mean_rtt: Mean,
    pub q10_rtt: u64,
    pub q90_rtt: u64,
    pub share: Share,
}

impl CrossingRow {
    pub fn ip_version(&self) -> Family {
        self.relation.ip_version
    }
}

/// Group-to-group crossings per relation.
///
/// A run counts once per crossing however many links realise it; its RTT
/// sample is the hop RTT of the first destination-group router reached
/// over that crossing. Rows below the threshold are dropped. Sorted by
/// relation, then share descending, then group labels.
pub fn crossing_table(observations: &[LinkObservation], opts: CrossingOptions) -> Vec<CrossingRow> {
    type Key = (RelationKey, String, String);
    let mut per_run: BTreeMap<Key, BTreeMap<usize, (u16, u64)>> = BTreeMap::new();
    let mut totals: BTreeMap<RelationKey, usize> = BTreeMap::new();
    for obs in observations {
        totals.insert(obs.relation.clone(), obs.runs_total);
        if opts.exclude_implausible && obs.flagged_implausible() {
            continue;
        }
        let (Some(from_g), Some(to_g)) = (
            opts.grouping.group_of(&obs.from),
            opts.grouping.group_of(&obs.to),
        ) else {
            continue;
        };
        if from_g == to_g {
            continue;
        }
        let runs = per_run
            .entry((obs.relation.clone(), from_g, to_g))
            .or_default();
        for s in &obs.samples {
            let e = runs.entry(s.run).or_insert((s.to_hop, s.to_rtt));
            if s.to_hop < e.0 {
                *e = (s.to_hop, s.to_rtt);
            }
        }
    }
    let mut rows: Vec<CrossingRow> = per_run
        .into_iter()
        .filter_map(|((relation, from_group, to_group), runs)| {
            let share = Share {
                part: runs.len() as u64,
                whole: totals[&relation] as u64,
            };
            if !share.at_least(opts.threshold) {
                return None;
            }
            let s = Summary::of(runs.values().map(|&(_, rtt)| rtt).collect())?;
            Some(CrossingRow {
                relation,
                from_group,
                to_group,
                mean_rtt: s.mean,
                q10_rtt: s.q10,
                q90_rtt: s.q90,
                share,
            })
        })
        .collect();
    rows.sort_by(|a, b| {
        a.relation
            .cmp(&b.relation)
            .then_with(|| {
                // Descending share, compared exactly.
                (u128::from(b.share.part) * u128::from(a.share.whole))
                    .cmp(&(u128::from(a.share.part) * u128::from(b.share.whole)))
            })
            .then_with(|| a.from_group.cmp(&b.from_group))
            .then_with(|| a.to_group.cmp(&b.to_group))
    });
    rows
}

/// Path length statistics over the runs that reached the destination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HopCountStats {
    pub relation: RelationKey,
    pub runs: usize,
    pub min: u64,
    pub q10: u64,
    pub mean: Mean,
    pub median: u64,
    pub q90: u64,
    pub max: u64,
}

/// `None` when no run of `relation` reached its destination.
pub fn hop_count_stats(relation: &RelationKey, runs: &[TracerouteRun]) -> Option<HopCountStats> {
    let counts: Vec<u64> = runs
        .iter()
        .filter(|r| belongs(relation, r))
        .filter_map(|r| r.destination_hop())
        .map(|h| u64::from(h.hop))
        .collect();
    let s = Summary::of(counts)?;
    Some(HopCountStats {
        relation: relation.clone(),
        runs: s.count,
        min: s.min,
        q10: s.q10,
        mean: s.mean,
        median: s.median,
        q90: s.q90,
        max: s.max,
    })
}
