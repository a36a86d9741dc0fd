use std::net::IpAddr;
use std::path::PathBuf;

use routescope::enrich::{
    haversine_km, min_rtt_us, plausibility_filter, Enricher, GeoLocation, GeoSource, Plausibility,
};
use routescope::sim::SimTopology;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn enricher() -> Enricher {
    Enricher::from_files(
        &fixture("as_prefixes.csv"),
        &fixture("as_names.csv"),
        &fixture("geo.csv"),
    )
    .unwrap()
}

#[test]
fn snapshots_agree_with_every_topology_node() {
    let e = enricher();
    for topo in ["nordic.toml", "essen.toml", "haikou.toml"] {
        let t = SimTopology::load(fixture(topo)).unwrap();
        for node in t.nodes() {
            for &a in &node.addresses {
                let hop = e.enrich(a);
                assert_eq!(hop.asn, node.asn, "{topo} {} {a}", node.id);
                assert_eq!(hop.as_name, node.as_name, "{topo} {} {a}", node.id);
                if let Some((lat, lon)) = node.coordinates {
                    let g = hop.geo.expect("located");
                    assert_eq!((g.latitude, g.longitude), (lat, lon));
                    assert_eq!(Some(g.country.as_str()), node.country.as_deref());
                }
            }
        }
    }
}

#[test]
fn labels_match_table_rendering() {
    let e = enricher();
    let ip = |s: &str| s.parse::<IpAddr>().unwrap();
    assert_eq!(e.enrich(ip("10.16.1.3")).as_label().unwrap(), "1653: SUNET");
    assert_eq!(
        e.enrich(ip("10.26.1.2")).as_label().unwrap(),
        "2603: NORDUNET"
    );
    assert_eq!(
        e.enrich(ip("10.224.0.10")).as_label().unwrap(),
        "224: UNINETT"
    );
    assert_eq!(e.enrich(ip("10.26.1.2")).country(), Some("DK"));
    let stray = e.enrich(ip("192.0.2.1"));
    assert_eq!((stray.asn, stray.as_name, stray.geo), (None, None, None));
}

#[test]
fn karlstad_trondheim_link_check() {
    let e = enricher();
    let kau = e.enrich("10.16.0.10".parse().unwrap()).geo.unwrap();
    let ntnu = e.enrich("10.224.0.10".parse().unwrap()).geo.unwrap();
    let d = haversine_km(kau.coordinates(), ntnu.coordinates());
    let min = min_rtt_us(d);
    assert_eq!(
        plausibility_filter(Some(&kau), Some(&ntnu), min - 1.0).unwrap(),
        Plausibility::Implausible { min_rtt_us: min }
    );
    assert!(plausibility_filter(Some(&kau), Some(&ntnu), min)
        .unwrap()
        .is_plausible());
}

#[test]
fn twelve_thousand_five_hundred_km_round_trip() {
    // Two points 6 250 km apart along the equator.
    let deg = 6_250.0 / (std::f64::consts::PI * 6371.0) * 180.0;
    let at = |lon: f64| GeoLocation {
        latitude: 0.0,
        longitude: lon,
        country: "XX".into(),
        estimated_error_km: 0.0,
        provider: GeoSource::FallbackDb,
    };
    let (a, b) = (at(0.0), at(deg));
    let Plausibility::Implausible { min_rtt_us } =
        plausibility_filter(Some(&a), Some(&b), 3_000.0).unwrap()
    else {
        panic!("+3 ms must be flagged");
    };
    assert!((41_600.0..=41_800.0).contains(&min_rtt_us), "{min_rtt_us}");
    assert!(plausibility_filter(Some(&a), Some(&b), 45_000.0)
        .unwrap()
        .is_plausible());
}
