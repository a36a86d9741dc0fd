use std::net::IpAddr;
use std::path::PathBuf;

use proptest::prelude::*;
use routescope::analytics::{
    crossing_table, crossing_table_rows, export_route_graph, hop_count_rows, hop_count_stats,
    link_shares, CrossingOptions, CrossingRow, GraphFormat, GraphOptions, Grouping,
};
use routescope::enrich::{
    AsEntry, AsTable, CsvGeoProvider, Enricher, GeoLocation, GeoResolver, GeoSource,
};
use routescope::probe::RelationKey;
use routescope::store::{Hop, HopStatus, TracerouteRun};
use routescope_testkit::corpus::random_corpus;
use routescope_testkit::equivalence::check_corpus;
use routescope_testkit::{oracle, tables};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn nordic_enricher() -> Enricher {
    Enricher::from_files(
        &fixture("as_prefixes.csv"),
        &fixture("as_names.csv"),
        &fixture("geo.csv"),
    )
    .unwrap()
}

fn ip(s: &str) -> IpAddr {
    s.parse().unwrap()
}

fn by_as(threshold: f64) -> CrossingOptions {
    CrossingOptions {
        grouping: Grouping::ByAs,
        threshold,
        exclude_implausible: false,
    }
}

#[test]
fn inter_as_fixture_reproduces_both_rows() {
    let rel = tables::kau_uninett();
    let obs = link_shares(&rel, &tables::inter_as_runs(), &nordic_enricher());
    let text = crossing_table_rows(&crossing_table(&obs, by_as(0.1))).to_csv();
    assert_eq!(
        text,
        "IP,From ISP,To ISP,From,To,Mean,Q10 %,Q90 %,%\n\
         IPv4,SUNET,Uninett,1653: SUNET,2603: NORDUNET,13.80,11.76,14.32,99.41\n\
         IPv4,SUNET,Uninett,2603: NORDUNET,224: UNINETT,26.90,24.50,27.62,99.32\n"
    );
}

#[test]
fn hop_fixture_reproduces_the_row() {
    let rel = tables::kau_uninett();
    let s = hop_count_stats(&rel, &tables::hop_count_runs()).unwrap();
    assert_eq!(s.runs, 50);
    let t = hop_count_rows(&[s]);
    assert_eq!(
        t.rows[0][3..],
        ["14", "14.00", "14.66", "15.00", "15.00"].map(String::from)
    );
    let five: Vec<TracerouteRun> = [14u16, 14, 15, 15, 15]
        .iter()
        .map(|&n| run(&rel, (1..n).map(|h| Some(10 + h as u8)).collect(), true))
        .collect();
    let s = hop_count_stats(&rel, &five).unwrap();
    assert_eq!(
        (s.min, s.median, s.mean.format(1, 1)),
        (14, 15, "14.6".into())
    );
}

/// Run over routers `10.0.1.<n>` (None = timeout), optionally ending at the
/// destination. Hop RTT is 1 ms per hop.
fn run(rel: &RelationKey, path: Vec<Option<u8>>, reach: bool) -> TracerouteRun {
    let mut hops: Vec<Hop> = path
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let h = i as u16 + 1;
            match r {
                Some(n) => Hop::responded(
                    h,
                    IpAddr::from([10, 0, 1, *n]),
                    HopStatus::TIME_EXCEEDED,
                    u64::from(h) * 1000,
                ),
                None => Hop::timeout(h),
            }
        })
        .collect();
    if reach {
        let h = hops.len() as u16 + 1;
        hops.push(Hop::responded(
            h,
            rel.destination_address,
            HopStatus::ECHO_REPLY,
            u64::from(h) * 1000,
        ));
    }
    TracerouteRun {
        timestamp: tables::T0,
        source: rel.source_address,
        destination: rel.destination_address,
        round: 0,
        hops,
    }
}

fn toy_relation() -> RelationKey {
    RelationKey::new("a", ip("10.9.0.1"), "b", ip("10.9.0.2")).unwrap()
}

/// Routers 10.0.1.1-4 in AS 1 (SE), 10.0.1.5-9 in AS 2 (NO); 10.0.1.9 has
/// no location.
fn toy_enricher() -> Enricher {
    let mut t = AsTable::new();
    t.insert(AsEntry {
        prefix: "10.0.1.0/29".parse().unwrap(),
        asn: 1,
    });
    t.insert(AsEntry {
        prefix: "10.0.1.4/32".parse().unwrap(),
        asn: 1,
    });
    t.insert(AsEntry {
        prefix: "10.0.1.5/32".parse().unwrap(),
        asn: 2,
    });
    t.insert(AsEntry {
        prefix: "10.0.1.6/31".parse().unwrap(),
        asn: 2,
    });
    t.insert(AsEntry {
        prefix: "10.0.1.8/31".parse().unwrap(),
        asn: 2,
    });
    t.set_name(1, "ONE");
    t.set_name(2, "TWO");
    let mut g = CsvGeoProvider::new("toy");
    for n in 1..=8u8 {
        g.insert(
            IpAddr::from([10, 0, 1, n]),
            GeoLocation {
                latitude: 59.0 + f64::from(n) * 0.1,
                longitude: 12.0,
                country: if n <= 4 { "SE" } else { "NO" }.into(),
                estimated_error_km: 1.0,
                provider: GeoSource::RttMultilateration,
            },
        );
    }
    Enricher::new(t, GeoResolver::new(vec![Box::new(g)]))
}

#[test]
fn link_presence_rules() {
    let rel = toy_relation();
    let e = toy_enricher();
    let mut runs: Vec<TracerouteRun> = (0..10)
        .map(|_| run(&rel, vec![Some(1), Some(2), Some(5)], true))
        .collect();
    // Revisits 1 -> 2 in the same run; counted once.
    runs[0] = run(
        &rel,
        vec![Some(1), Some(2), Some(1), Some(2), Some(5)],
        true,
    );
    // Timeout at hop 2 breaks the chain.
    runs[1] = run(&rel, vec![Some(1), None, Some(5)], true);
    let obs = link_shares(&rel, &runs, &e);
    let share = |a: u8, b: u8| {
        obs.iter()
            .find(|o| {
                o.from.address == IpAddr::from([10, 0, 1, a])
                    && o.to.address == IpAddr::from([10, 0, 1, b])
            })
            .map(|o| (o.runs_observed(), o.runs_total))
    };
    assert_eq!(share(1, 2), Some((9, 10)));
    assert_eq!(share(2, 5), Some((9, 10)));
    assert_eq!(share(1, 5), None);
    assert!(obs.iter().all(|o| o.runs_observed() <= o.runs_total));
}

#[test]
fn one_in_a_thousand_survives_the_filter() {
    let rel = toy_relation();
    let mut runs: Vec<TracerouteRun> = (0..1000)
        .map(|_| run(&rel, vec![Some(1), Some(2), Some(3)], true))
        .collect();
    runs[500] = run(&rel, vec![Some(1), Some(6), Some(3)], true);
    let obs = link_shares(&rel, &runs, &toy_enricher());
    let rows = crossing_table(&obs, by_as(0.1));
    let pairs: Vec<(String, String, String)> = rows
        .iter()
        .map(|r| {
            (
                r.from_group.clone(),
                r.to_group.clone(),
                r.share.to_string(),
            )
        })
        .collect();
    assert_eq!(
        pairs,
        vec![
            ("1: ONE".into(), "2: TWO".into(), "0.10".into()),
            ("2: TWO".into(), "1: ONE".into(), "0.10".into()),
        ]
    );
    assert!(crossing_table(&obs, by_as(0.2)).is_empty());
    // All in one AS: nothing crosses.
    let same: Vec<_> = (0..10)
        .map(|_| run(&rel, vec![Some(1), Some(2)], false))
        .collect();
    assert!(crossing_table(&link_shares(&rel, &same, &toy_enricher()), by_as(0.1)).is_empty());
}

#[test]
fn route_graph_styles_and_sidecar() {
    let rel = toy_relation();
    let mut runs: Vec<TracerouteRun> = (0..2000)
        .map(|_| run(&rel, vec![Some(1), Some(2), Some(5), Some(9)], false))
        .collect();
    runs[7] = run(&rel, vec![Some(1), Some(3), Some(5)], false);
    let obs = link_shares(&rel, &runs, &toy_enricher());
    let g = export_route_graph(&obs, &GraphOptions::default(), GraphFormat::Csv);
    let lines: Vec<&str> = g.document.lines().collect();
    // 1->2, 2->5, 5->9 kept; 1->3 and 3->5 at 0.05 % dropped.
    assert_eq!(lines.len(), 4, "{}", g.document);
    assert!(lines[1].contains(",10.0.1.1,10.0.1.2,") && lines[1].contains(",solid,"));
    assert!(lines[2].contains(",10.0.1.2,10.0.1.5,") && lines[2].contains(",dashed,"));
    assert_eq!(g.unlocatable, vec![ip("10.0.1.9")]);
    let flipped = GraphOptions {
        inter_as_dashed: false,
        ..GraphOptions::default()
    };
    let f = export_route_graph(&obs, &flipped, GraphFormat::Csv);
    assert!(f.document.lines().nth(2).unwrap().contains(",solid,"));
    for fmt in [GraphFormat::Dot, GraphFormat::Geojson, GraphFormat::Csv] {
        let a = export_route_graph(&obs, &GraphOptions::default(), fmt);
        let mut rev = obs.clone();
        rev.reverse();
        let b = export_route_graph(&rev, &GraphOptions::default(), fmt);
        assert_eq!(a, b);
    }
    let dot = export_route_graph(&obs, &GraphOptions::default(), GraphFormat::Dot).document;
    assert_eq!(dot.matches("penwidth=").count(), 3);
    assert!(dot.contains("style=dashed"));
    let geo = export_route_graph(&obs, &GraphOptions::default(), GraphFormat::Geojson).document;
    let v: serde_json::Value = serde_json::from_str(&geo).unwrap();
    let lines = v["features"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|f| f["geometry"]["type"] == "LineString")
        .count();
    assert_eq!(lines, 2, "the edge to the unlocated router cannot be drawn");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn tables_match_brute_force(seed in any::<u64>(), t in prop::sample::select(vec![0u64, 1, 25, 100, 150])) {
        let c = random_corpus(seed, 3_000);
        check_corpus(&c, t).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn raising_the_threshold_never_adds_rows(seed in any::<u64>(), lo in 0u64..200, extra in 0u64..200) {
        let c = random_corpus(seed, 1_500);
        let e = c.enricher();
        let obs: Vec<_> = c.relations.iter().flat_map(|r| link_shares(r, &c.runs, &e)).collect();
        let key = |r: &CrossingRow| (r.relation.clone(), r.from_group.clone(), r.to_group.clone());
        let low: Vec<_> = crossing_table(&obs, by_as(lo as f64 / 10.0)).iter().map(key).collect();
        let high = crossing_table(&obs, by_as((lo + extra) as f64 / 10.0));
        for r in &high {
            prop_assert!(low.contains(&key(r)));
            prop_assert!(r.share.part > 0 && r.share.part <= r.share.whole);
            prop_assert!(r.q10_rtt <= r.q90_rtt);
        }
    }
}

#[test]
fn year_oracle_agrees_with_calendar() {
    for (ts, y) in [
        (0u64, 1970),
        (tables::T0 - 1, 2021),
        (tables::T0, 2022),
        (1_709_251_199_000_000, 2024),
        (4_102_444_800_000_000, 2100),
    ] {
        assert_eq!(oracle::year_of(ts), y);
        assert_eq!(routescope::analytics::utc_year(ts), y);
    }
}
