use std::collections::BTreeSet;
use std::net::IpAddr;
use std::path::PathBuf;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use routescope::icmp::Family;
use routescope::probe::{run_ping_once, run_traceroute, HopStatus, ProbeSchedule, VirtualClock};
use routescope::sim::{
    run_scenario, sim_prober, ChangeSpec, EventSpec, ForwardOutcome, LinkSpec, NodeKind, NodeSpec,
    Policy, ProbeTrace, RouteSpec, ScenarioConfig, SimNetwork, SimTopology, TopologyFile,
    DEFAULT_START_US,
};
use routescope::store::{to_canonical_json, Record};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn ip(s: &str) -> IpAddr {
    s.parse().unwrap()
}

fn config(
    sources: &[&str],
    destinations: &[&str],
    duration_s: u64,
    schedule: ProbeSchedule,
) -> ScenarioConfig {
    ScenarioConfig {
        sources: sources.iter().map(|s| ip(s)).collect(),
        destinations: destinations.iter().map(|s| ip(s)).collect(),
        schedule,
        start_us: DEFAULT_START_US,
        duration_s,
        seed: 42,
        trace: false,
    }
}

#[test]
fn shipped_fixtures_are_valid() {
    for name in ["nordic.toml", "essen.toml", "haikou.toml", "ecmp4.toml"] {
        let t = SimTopology::load(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(t.hosts().count() >= 2, "{name}");
    }
}

#[test]
fn ecmp_choice_depends_only_on_the_prefix() {
    let topo = SimTopology::load(fixture("ecmp4.toml")).unwrap();
    let src = topo.node_index("src").unwrap();
    let dst = topo.node_index("dst").unwrap();
    let mut net = SimNetwork::new(topo, 0);
    let a = net.forward(src, dst, 64, 0x0800_1234, 0);
    let b = net.forward(src, dst, 64, 0x0800_1234, 9_999_999);
    assert_eq!(a.path, b.path);

    // Echo requests differing only in checksum: type 8, code 0.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut second_hops = BTreeSet::new();
    for _ in 0..256 {
        let checksum: u16 = rng.random();
        let f = net.forward(src, dst, 64, 0x0800_0000 | u32::from(checksum), 0);
        second_hops.insert(f.path[2]);
    }
    assert!(second_hops.len() >= 2);
    // Oracle: the index is checksum mod 4, so all four branches appear.
    assert_eq!(second_hops.len(), 4);
}

/// Every probe of each run followed one path: all probe paths are
/// prefixes of the longest one.
fn runs_single_path(trace: &[ProbeTrace]) -> Vec<bool> {
    let mut by_run: std::collections::BTreeMap<u64, Vec<&ProbeTrace>> = Default::default();
    for t in trace {
        by_run.entry(t.sent_at).or_default().push(t);
    }
    by_run
        .values()
        .map(|probes| {
            let longest = probes
                .iter()
                .map(|p| &p.forwarded.path)
                .max_by_key(|p| p.len())
                .unwrap();
            probes
                .iter()
                .all(|p| longest.starts_with(&p.forwarded.path))
        })
        .collect()
}

fn ecmp_runs(crafting: bool, family: Family) -> Vec<bool> {
    let topo = SimTopology::load(fixture("ecmp4.toml")).unwrap();
    let (src, dst) = match family {
        Family::V4 => (ip("10.0.0.1"), ip("10.0.0.2")),
        Family::V6 => (ip("2001:db8::1"), ip("2001:db8::2")),
    };
    let schedule = ProbeSchedule {
        crafting,
        ..ProbeSchedule::default()
    };
    let mut p = sim_prober(
        &topo,
        src,
        VirtualClock::starting_at(DEFAULT_START_US),
        &schedule,
        5,
    )
    .unwrap();
    p.transport_mut().network_mut().enable_trace();
    for round in 0..100 {
        let run = run_traceroute(&mut p, dst, round, 8).unwrap();
        assert_eq!(run.hops.last().unwrap().status, HopStatus::ECHO_REPLY);
    }
    let trace = p.transport_mut().network().trace().to_vec();
    assert_eq!(trace.len(), 800);
    runs_single_path(&trace)
}

#[test]
fn crafted_runs_never_mix_paths() {
    for family in [Family::V4, Family::V6] {
        let crafted = ecmp_runs(true, family);
        assert_eq!(crafted.len(), 100);
        assert!(crafted.iter().all(|single| *single), "{family:?}");
        let plain = ecmp_runs(false, family);
        assert!(plain.iter().any(|single| !single), "{family:?}");
    }
}

fn random_topology(rng: &mut ChaCha8Rng) -> (SimTopology, Vec<u64>) {
    let routers = rng.random_range(1..=12usize);
    let node = |id: String, kind, addr: String| NodeSpec {
        id,
        kind,
        addresses: vec![addr.parse().unwrap()],
        country: None,
        asn: None,
        as_name: None,
        lat: None,
        lon: None,
        policy: Policy::Responsive,
    };
    let mut f = TopologyFile::default();
    f.nodes
        .push(node("s".into(), NodeKind::Host, "10.0.0.1".into()));
    for i in 0..routers {
        f.nodes.push(node(
            format!("r{i}"),
            NodeKind::Router,
            format!("10.1.{}.{}", i / 200, i % 200 + 1),
        ));
    }
    f.nodes
        .push(node("d".into(), NodeKind::Host, "10.0.0.2".into()));
    let names: Vec<String> = f.nodes.iter().map(|n| n.id.clone()).collect();
    let mut latencies = Vec::new();
    for w in names.windows(2) {
        let l = rng.random_range(1..=50_000u64);
        latencies.push(l);
        f.links.push(LinkSpec {
            from: w[0].clone(),
            to: w[1].clone(),
            latency_us: l,
            bidirectional: true,
        });
    }
    // Shortcuts that are strictly slower than the chain, so they never win.
    for _ in 0..routers {
        let a = rng.random_range(0..names.len() - 1);
        let b = rng.random_range(a + 1..names.len());
        if b > a + 1 && names[a] != "s" && names[b] != "d" {
            let chain: u64 = latencies[a..b].iter().sum();
            f.links.push(LinkSpec {
                from: names[a].clone(),
                to: names[b].clone(),
                latency_us: chain + rng.random_range(1..1000u64),
                bidirectional: true,
            });
        }
    }
    (SimTopology::new(f).unwrap(), latencies)
}

#[test]
fn ping_rtt_is_additive_over_links() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let (topo, latencies) = random_topology(&mut rng);
        let mut p = sim_prober(
            &topo,
            ip("10.0.0.1"),
            VirtualClock::starting_at(DEFAULT_START_US),
            &ProbeSchedule::default(),
            1,
        )
        .unwrap();
        p.transport_mut().network_mut().enable_trace();
        let rec = run_ping_once(&mut p, ip("10.0.0.2")).unwrap();
        let path = p.transport_mut().network().trace()[0]
            .forwarded
            .path
            .clone();
        let traversed: u64 = path
            .windows(2)
            .map(|w| topo.latency(w[0], w[1]).unwrap())
            .sum();
        assert_eq!(rec.rtt, Some(2 * traversed));
        assert_eq!(traversed, latencies.iter().sum::<u64>());
    }
}

#[test]
fn scenarios_are_deterministic() {
    let topo = SimTopology::load(fixture("nordic.toml")).unwrap();
    let cfg = config(
        &["10.16.0.10"],
        &["10.224.0.10", "10.21.0.10"],
        900,
        ProbeSchedule::default(),
    );
    let render = |o: &routescope::sim::ScenarioOutcome| {
        o.records
            .iter()
            .map(to_canonical_json)
            .collect::<Vec<_>>()
            .join("\n")
    };
    let a = run_scenario(&topo, &cfg).unwrap();
    let b = run_scenario(&topo, &cfg).unwrap();
    assert_eq!(render(&a), render(&b));
    let mut other = cfg.clone();
    other.seed = 43;
    assert_ne!(render(&a), render(&run_scenario(&topo, &other).unwrap()));
    assert!(a.records.iter().all(|r| r.validate().is_ok()));
}

#[test]
fn conservation_one_outcome_per_probe() {
    let topo = SimTopology::load(fixture("haikou.toml")).unwrap();
    let mut cfg = config(
        &["10.45.0.10"],
        &["10.224.0.10"],
        600,
        ProbeSchedule::default(),
    );
    cfg.trace = true;
    let out = run_scenario(&topo, &cfg).unwrap();
    let trace = &out.traces[0].1;
    let summary = out.summaries[0].1;
    assert_eq!(
        trace.len() as u64,
        summary.pings + summary.traceroute_runs * 35
    );
    // The Beijing router is silent: hop 3 never answers, the rest do.
    for r in out.records.iter().filter_map(Record::as_traceroute) {
        assert_eq!(r.hops[2].status, HopStatus::TIMEOUT);
        assert_eq!(r.hops.last().unwrap().status, HopStatus::ECHO_REPLY);
    }
    assert!(trace
        .iter()
        .all(|t| !matches!(t.forwarded.outcome, ForwardOutcome::Dropped(_))));
}

const NORDUNET_CPH: &str = "10.26.1.2";

fn via_denmark(r: &routescope::store::TracerouteRun) -> bool {
    r.hops.iter().any(|h| h.address == Some(ip(NORDUNET_CPH)))
}

#[test]
fn denmark_detour_follows_the_hash() {
    let topo = SimTopology::load(fixture("nordic.toml")).unwrap();
    let mut cfg = config(
        &["10.16.0.10"],
        &["10.224.0.10"],
        3600,
        ProbeSchedule::default(),
    );
    cfg.trace = true;
    let out = run_scenario(&topo, &cfg).unwrap();
    let trace = &out.traces[0].1;
    let runs: Vec<_> = out
        .records
        .iter()
        .filter_map(Record::as_traceroute)
        .collect();
    assert_eq!(runs.len(), 36);
    let mut detours = 0;
    for run in &runs {
        let first = trace
            .iter()
            .find(|t| t.sent_at == run.timestamp && t.ttl == 1)
            .unwrap();
        // Group at nordunet-sto is [osl, osl, osl, cph].
        let expected = first.prefix % 4 == 3;
        assert_eq!(via_denmark(run), expected, "run at {}", run.timestamp);
        detours += usize::from(expected);
    }
    assert!(
        detours > 0 && detours * 2 < runs.len(),
        "{detours} of {}",
        runs.len()
    );
}

#[test]
fn silenced_router_is_a_gap_in_every_run() {
    let mut file =
        TopologyFile::from_toml(&std::fs::read_to_string(fixture("nordic.toml")).unwrap()).unwrap();
    file.nodes
        .iter_mut()
        .find(|n| n.id == "sunet-sto")
        .unwrap()
        .policy = Policy::RateLimit(0);
    let topo = SimTopology::new(file).unwrap();
    let out = run_scenario(
        &topo,
        &config(
            &["10.16.0.10"],
            &["10.224.0.10"],
            900,
            ProbeSchedule::default(),
        ),
    )
    .unwrap();
    let runs: Vec<_> = out
        .records
        .iter()
        .filter_map(Record::as_traceroute)
        .collect();
    assert_eq!(runs.len(), 9);
    for r in runs {
        assert_eq!(r.hops[2].status, HopStatus::TIMEOUT);
        assert!(r
            .hops
            .iter()
            .enumerate()
            .all(|(i, h)| i == 2 || h.status.responded()));
    }
}

#[test]
fn route_change_mixes_epochs() {
    let mut file =
        TopologyFile::from_toml(&std::fs::read_to_string(fixture("nordic.toml")).unwrap()).unwrap();
    file.events.push(EventSpec {
        at_s: 1800.0,
        change: ChangeSpec::SetRoute(RouteSpec {
            node: "nordunet-sto".into(),
            destination: "ntnu-uninett".into(),
            via: vec!["nordunet-cph".into()],
            weights: None,
        }),
    });
    let topo = SimTopology::new(file).unwrap();
    let out = run_scenario(
        &topo,
        &config(
            &["10.16.0.10"],
            &["10.224.0.10"],
            3600,
            ProbeSchedule::default(),
        ),
    )
    .unwrap();
    let switch = DEFAULT_START_US + 1_800_000_000;
    let runs: Vec<_> = out
        .records
        .iter()
        .filter_map(Record::as_traceroute)
        .collect();
    let (before, after): (Vec<_>, Vec<_>) = runs.iter().partition(|r| r.timestamp < switch);
    let count =
        |rs: &[&&routescope::store::TracerouteRun]| rs.iter().filter(|r| via_denmark(r)).count();
    let (b, a) = (count(&before), count(&after));
    assert_eq!(a, after.len());
    assert!(b * 2 < before.len());
    let total = count(&runs.iter().collect::<Vec<_>>());
    let share = |k: usize, n: usize| k as f64 / n as f64;
    let mixed = (before.len() as f64 * share(b, before.len())
        + after.len() as f64 * share(a, after.len()))
        / runs.len() as f64;
    assert!((share(total, runs.len()) - mixed).abs() < 1e-12);
    assert!(share(b, before.len()) < share(total, runs.len()) && share(total, runs.len()) < 1.0);
}

#[test]
fn replies_carry_valid_checksums() {
    let topo = SimTopology::load(fixture("essen.toml")).unwrap();
    let mut p = sim_prober(
        &topo,
        ip("2001:db8:680::10"),
        VirtualClock::starting_at(DEFAULT_START_US),
        &ProbeSchedule::default(),
        9,
    )
    .unwrap();
    let run = run_traceroute(&mut p, ip("2001:db8:224::10"), 0, 35).unwrap();
    assert_eq!(
        run.hops.last().unwrap().address,
        Some(ip("2001:db8:224::10"))
    );
    assert!(run.hops.iter().all(|h| h.status.responded()));
    assert_eq!(p.stats().checksum_mismatches, 0);
}
