use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use routescope::probe::{RawIcmpTransport, SystemClock, TransportError};
use routescope::store::{write_ndjson, Record, RecordKind, Store, StoreQuery};
use routescope_testkit::corpus::random_corpus;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = routescope_cli::run(
        std::iter::once("routescope").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Config for the nordic topology with a store under `dir`.
fn nordic_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(
        &path,
        format!(
            "store_path = \"store\"\n\
             [[source]]\nlabel = \"SUNET\"\naddress = \"10.16.0.10\"\n\
             [[destination]]\nlabel = \"Uninett\"\naddress = \"10.224.0.10\"\n\
             [[destination]]\nlabel = \"PowerTech\"\naddress = \"10.21.0.10\"\n\
             [enrichment]\nprefixes = \"{}\"\nnames = \"{}\"\ngeo = \"{}\"\n",
            fixture("as_prefixes.csv").display(),
            fixture("as_names.csv").display(),
            fixture("geo.csv").display(),
        ),
    )
    .unwrap();
    path
}

fn measured(dir: &Path, seconds: u64) -> PathBuf {
    let config = nordic_config(dir);
    let secs = seconds.to_string();
    let (code, out, err) = cli(&[
        "measure",
        "--config",
        s(&config),
        "--sim",
        s(&fixture("nordic.toml")),
        "--duration",
        &secs,
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("10.16.0.10:"), "{out}");
    config
}

fn ndjson(records: &[Record]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_ndjson(&mut buf, records).unwrap();
    buf
}

#[test]
fn shipped_config_parses() {
    let c = routescope_cli::Config::load(&fixture("nordic.config.toml")).unwrap();
    assert_eq!(c.relations().len(), 2);
    assert!(c.enrichment.unwrap().prefixes.exists());
}

#[test]
fn export_import_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ndjson");
    std::fs::write(&input, ndjson(&random_corpus(9, 2_000).records())).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let (code, out, _) = cli(&["import", "--store", s(&a), s(&input)]);
    assert_eq!(code, 0);
    assert!(out.contains("rejected 0"), "{out}");
    let first = dir.path().join("a.ndjson");
    assert_eq!(cli(&["export", "--store", s(&a), "--out", s(&first)]).0, 0);
    assert_eq!(cli(&["import", "--store", s(&b), s(&first)]).0, 0);
    let (code, second, _) = cli(&["export", "--store", s(&b)]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read_to_string(&first).unwrap(), second);
    assert_eq!(
        Store::open(&a).unwrap().snapshot(),
        Store::open(&b).unwrap().snapshot()
    );
}

fn corrupt_input(dir: &Path) -> PathBuf {
    let mut text = ndjson(&random_corpus(3, 3).records());
    text.extend_from_slice(b"{\"timestamp\": \"yesterday\"}\n");
    let path = dir.join("corrupt.ndjson");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn corrupt_line_is_reported_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let input = corrupt_input(dir.path());
    let valid = std::fs::read_to_string(&input).unwrap().lines().count() - 1;
    let store = dir.path().join("store");
    let (code, out, err) = cli(&["import", "--store", s(&store), s(&input)]);
    assert_eq!(code, 0, "{err}");
    assert!(err.contains(&format!(":{}: rejected", valid + 1)), "{err}");
    assert!(
        out.contains(&format!("imported {valid} record(s), rejected 1")),
        "{out}"
    );
    assert_eq!(Store::open(&store).unwrap().len(), valid);
}

#[test]
fn strict_import_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.ndjson");
    std::fs::write(&good, ndjson(&random_corpus(4, 50).records())).unwrap();
    let bad = corrupt_input(dir.path());
    let store = dir.path().join("store");
    let (code, _, err) = cli(&[
        "import",
        "--store",
        s(&store),
        "--strict",
        s(&good),
        s(&bad),
    ]);
    assert_eq!(code, 5, "{err}");
    assert!(!store.exists() || Store::open(&store).unwrap().is_empty());
    assert_eq!(
        cli(&["import", "--store", s(&store), "--strict", s(&good)]).0,
        0
    );
}

#[test]
fn five_minutes_is_one_cycle_of_three_rounds() {
    let dir = tempfile::tempdir().unwrap();
    measured(dir.path(), 300);
    let store = Store::open(dir.path().join("store")).unwrap();
    assert_eq!(store.count(&StoreQuery::all(RecordKind::Ping)), 600);
    let mut rounds: BTreeMap<IpAddr, Vec<u32>> = BTreeMap::new();
    for r in store.query(&StoreQuery::all(RecordKind::Traceroute)) {
        let t = r.as_traceroute().unwrap();
        rounds.entry(t.destination).or_default().push(t.round);
    }
    assert_eq!(rounds.len(), 2);
    for v in rounds.values_mut() {
        v.sort();
        assert_eq!(v, &[0, 1, 2]);
    }
}

#[test]
fn simulated_measurement_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    measured(a.path(), 900);
    measured(b.path(), 900);
    let export = |d: &Path| cli(&["export", "--store", s(&d.join("store"))]).1;
    assert_eq!(export(a.path()), export(b.path()));
    let (code, sim, _) = cli(&[
        "sim-run",
        "--topology",
        s(&fixture("nordic.toml")),
        "--source",
        "10.16.0.10",
        "--destination",
        "10.224.0.10",
        "--destination",
        "10.21.0.10",
        "--duration",
        "900",
    ]);
    assert_eq!(code, 0);
    assert_eq!(sim, export(a.path()));
}

#[test]
fn analysis_is_idempotent_and_parallel_safe() {
    let dir = tempfile::tempdir().unwrap();
    let config = measured(dir.path(), 3_600);
    for artifact in [
        "rtt-series",
        "cdf",
        "inter-as",
        "inter-country",
        "hops",
        "graph",
    ] {
        let base = ["analyze", "--config", s(&config), "--artifact", artifact];
        let (code, first, err) = cli(&base);
        assert_eq!(code, 0, "{artifact}: {err}");
        assert!(first.lines().count() > 1, "{artifact}: {first}");
        assert_eq!(cli(&base).1, first, "{artifact}");
        let parallel: Vec<&str> = base
            .iter()
            .copied()
            .chain(["--parallel-by-relation"])
            .collect();
        assert_eq!(cli(&parallel).1, first, "{artifact}");
    }
}

#[test]
fn graph_edges_match_link_count() {
    let dir = tempfile::tempdir().unwrap();
    let config = measured(dir.path(), 3_600);
    let store = Store::open(dir.path().join("store")).unwrap();
    // Oracle: per relation, count (from, to) pairs of consecutive answering
    // hops in at least 2.5 % of its runs.
    type Link = (IpAddr, IpAddr);
    let mut runs: BTreeMap<Link, Vec<BTreeSet<Link>>> = BTreeMap::new();
    for r in store.query(&StoreQuery::all(RecordKind::Traceroute)) {
        let t = r.as_traceroute().unwrap();
        let mut links = BTreeSet::new();
        for w in t.hops.windows(2) {
            if let (Some(a), Some(b)) = (w[0].address, w[1].address) {
                if w[1].hop == w[0].hop + 1 && a != b && w[0].rtt.is_some() && w[1].rtt.is_some() {
                    links.insert((a, b));
                }
            }
        }
        runs.entry((t.source, t.destination))
            .or_default()
            .push(links);
    }
    let mut want = 0;
    for sets in runs.values() {
        let mut counts: BTreeMap<(IpAddr, IpAddr), usize> = BTreeMap::new();
        for l in sets.iter().flatten() {
            *counts.entry(*l).or_default() += 1;
        }
        want += counts
            .values()
            .filter(|&&c| 1000 * c >= 25 * sets.len())
            .count();
    }
    let out = dir.path().join("graph.csv");
    let (code, _, err) = cli(&[
        "analyze",
        "--config",
        s(&config),
        "--artifact",
        "graph",
        "--threshold",
        "2.5",
        "--format",
        "csv",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    let edges = std::fs::read_to_string(&out).unwrap().lines().count() - 1;
    assert!(want > 0);
    assert_eq!(edges, want);
    assert!(dir.path().join("graph.csv.unlocatable.txt").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = measured(dir.path(), 60);
    let c = s(&config);
    // Empty selection.
    let (code, _, err) = cli(&[
        "analyze",
        "--config",
        c,
        "--artifact",
        "hops",
        "--source",
        "nobody",
    ]);
    assert_eq!(code, 6, "{err}");
    assert!(err.contains("empty selection"));
    // Usage errors.
    assert_eq!(
        cli(&["analyze", "--config", c, "--artifact", "nonsense"]).0,
        2
    );
    assert_eq!(
        cli(&[
            "analyze",
            "--config",
            c,
            "--artifact",
            "hops",
            "--format",
            "dot"
        ])
        .0,
        2
    );
    assert_eq!(
        cli(&[
            "measure",
            "--config",
            c,
            "--sim",
            s(&fixture("nordic.toml"))
        ])
        .0,
        2
    );
    assert_eq!(cli(&["export"]).0, 2);
    assert_eq!(cli(&["frobnicate"]).0, 2);
    let broken = dir.path().join("broken.toml");
    std::fs::write(
        &broken,
        "store_path = \"x\"\n[[source]]\nlabel = \"a\"\naddress = \"10.0.0.1\"\n",
    )
    .unwrap();
    assert_eq!(cli(&["measure", "--config", s(&broken)]).0, 2);
    assert_eq!(cli(&["--help"]).0, 0);
}

#[test]
fn graph_without_enrichment_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let input = dir.path().join("in.ndjson");
    std::fs::write(&input, ndjson(&random_corpus(5, 200).records())).unwrap();
    assert_eq!(cli(&["import", "--store", s(&store), s(&input)]).0, 0);
    assert_eq!(
        cli(&["analyze", "--store", s(&store), "--artifact", "graph"]).0,
        2
    );
    // Store-only analysis labels relations by address.
    let (code, out, _) = cli(&[
        "analyze",
        "--store",
        s(&store),
        "--artifact",
        "hops",
        "--format",
        "csv",
    ]);
    assert_eq!(code, 0);
    assert!(
        out.lines()
            .skip(1)
            .all(|l| l.starts_with("IPv4,10.200.0.") || l.starts_with("IPv6,2001:db8:c8::")),
        "{out}"
    );
}

fn can_open_raw(addr: IpAddr) -> bool {
    !matches!(
        RawIcmpTransport::open(addr, SystemClock::new()),
        Err(TransportError::PermissionDenied(_))
    )
}

fn live_config(dir: &Path) -> PathBuf {
    let config = dir.join("config.toml");
    std::fs::write(
        &config,
        "store_path = \"store\"\n[[source]]\nlabel = \"me\"\naddress = \"127.0.0.1\"\n\
         [[destination]]\nlabel = \"me too\"\naddress = \"127.0.0.2\"\n",
    )
    .unwrap();
    config
}

#[test]
fn live_mode_without_privileges_leaves_no_store() {
    let dir = tempfile::tempdir().unwrap();
    let config = live_config(dir.path());
    if !can_open_raw("127.0.0.1".parse().unwrap()) {
        let (code, _, err) = cli(&["measure", "--config", s(&config), "--duration", "1"]);
        assert_eq!(code, 3, "{err}");
        assert!(!dir.path().join("store").exists());
        return;
    }
    // Privileged test process: run the binary as nobody with no capabilities.
    use std::os::unix::fs::PermissionsExt;
    std::fs::set_permissions(dir.path(), std::fs::Permissions::from_mode(0o755)).unwrap();
    let output = std::process::Command::new("setpriv")
        .args([
            "--reuid=65534",
            "--regid=65534",
            "--clear-groups",
            "--inh-caps=-all",
            "--bounding-set=-all",
        ])
        .arg(env!("CARGO_BIN_EXE_routescope"))
        .args(["measure", "--config", s(&config), "--duration", "1"])
        .output();
    match output {
        Ok(o) if !String::from_utf8_lossy(&o.stderr).starts_with("setpriv:") => {
            assert_eq!(
                o.status.code(),
                Some(3),
                "{}",
                String::from_utf8_lossy(&o.stderr)
            );
            assert!(!dir.path().join("store").exists());
        }
        _ => eprintln!("skipped: privileged process and no usable setpriv"),
    }
}
