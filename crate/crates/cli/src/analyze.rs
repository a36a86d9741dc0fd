use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use routescope::analytics::{
    bucket_rtt_series, cdf_rows, crossing_table, crossing_table_rows, export_route_graph,
    hop_count_rows, hop_count_stats, link_shares, mean_rtt_cdf, rtt_series_rows, CrossingOptions,
    GraphFormat, GraphOptions, Grouping, LinkObservation, Table, TableFormat,
};
use routescope::enrich::{
    AsTable, CsvGeoProvider, Enricher, GeoProvider, GeoResolver, HttpGeoProvider, UreqFetch,
};
use routescope::probe::RelationKey;
use routescope::store::{Record, RecordKind, Store, StoreQuery, TracerouteRun};

use crate::config::{Config, EnrichmentPaths};
use crate::records::open_store;
use crate::{emit, fail, CliResult, Exit, StoreArgs, WithExit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Artifact {
    /// Per-bucket ping RTT mean, min, q10, q90 and max
    RttSeries,
    /// Per-year CDF of bucket mean RTTs
    Cdf,
    /// Inter-AS crossing shares with destination-side RTTs
    InterAs,
    /// Inter-country crossing shares with destination-side RTTs
    InterCountry,
    /// Hop counts of runs that reached the destination
    Hops,
    /// Route graph of links at or above the threshold
    Graph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Csv,
    Dot,
    Geojson,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    #[arg(long, value_enum)]
    pub artifact: Artifact,
    /// Only relations from this source (label or address)
    #[arg(long)]
    pub source: Option<String>,
    /// Only relations to this destination (label or address)
    #[arg(long)]
    pub destination: Option<String>,
    /// Minimum observation share in percent for links and crossings
    #[arg(long, default_value_t = 0.1)]
    pub threshold: f64,
    /// text or csv for tables; dot, geojson or csv for graphs
    /// [default: text for tables, dot for graphs]
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Output file [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Width of RTT series buckets
    #[arg(long, default_value_t = 3600)]
    pub bucket_seconds: u64,
    /// Drop links whose RTT increase is below the speed-of-light minimum
    #[arg(long)]
    pub exclude_implausible: bool,
    /// Draw intra-AS links dashed instead of inter-AS links
    #[arg(long)]
    pub intra_as_dashed: bool,
    /// Compute relations on separate threads (output is unchanged)
    #[arg(long)]
    pub parallel_by_relation: bool,
    /// Ask the configured online geolocation service for unknown routers
    #[arg(long)]
    pub geo_fallback: bool,
    /// Prefix to ASN snapshot (overrides the config)
    #[arg(long, requires_all = ["as_names", "geo"])]
    pub as_prefixes: Option<PathBuf>,
    /// ASN to name snapshot
    #[arg(long, requires = "as_prefixes")]
    pub as_names: Option<PathBuf>,
    /// Address to location snapshot
    #[arg(long, requires = "as_prefixes")]
    pub geo: Option<PathBuf>,
}

fn relations(store: &Store, config: Option<&Config>) -> Vec<RelationKey> {
    match config {
        Some(c) => c.relations(),
        None => store
            .relations()
            .into_iter()
            .filter_map(|(s, d)| RelationKey::new(s.to_string(), s, d.to_string(), d).ok())
            .collect(),
    }
}

fn selected(rel: &RelationKey, args: &AnalyzeArgs) -> bool {
    let hit = |want: &Option<String>, label: &str, addr: std::net::IpAddr| {
        want.as_deref()
            .is_none_or(|w| w == label || w == addr.to_string())
    };
    hit(&args.source, &rel.source_id, rel.source_address)
        && hit(
            &args.destination,
            &rel.destination_id,
            rel.destination_address,
        )
}

fn open_file(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))
        .exit(Exit::Usage)
}

fn enricher(args: &AnalyzeArgs, config: Option<&Config>) -> CliResult<Enricher> {
    let paths = match (&args.as_prefixes, &args.as_names, &args.geo) {
        (Some(p), Some(n), Some(g)) => EnrichmentPaths {
            prefixes: p.clone(),
            names: n.clone(),
            geo: g.clone(),
        },
        _ => match config.and_then(|c| c.enrichment.clone()) {
            Some(e) => e,
            None => {
                return fail(
                    Exit::Usage,
                    "this artifact needs enrichment data: use --config with [enrichment] or --as-prefixes/--as-names/--geo",
                )
            }
        },
    };
    let mut table = AsTable::new();
    table
        .load_prefixes(open_file(&paths.prefixes)?)
        .exit(Exit::Usage)?;
    table
        .load_names(open_file(&paths.names)?)
        .exit(Exit::Usage)?;
    let csv = CsvGeoProvider::load("geo", open_file(&paths.geo)?).exit(Exit::Usage)?;
    let mut providers: Vec<Box<dyn GeoProvider>> = vec![Box::new(csv)];
    if args.geo_fallback {
        let Some(fb) = config.and_then(|c| c.geo_fallback.clone()) else {
            return fail(
                Exit::Usage,
                "--geo-fallback needs a [geo_fallback] section in the config",
            );
        };
        let token = match &fb.token_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| anyhow::anyhow!("environment variable {var} is not set"))
                    .exit(Exit::Usage)?,
            ),
            None => None,
        };
        providers.push(Box::new(HttpGeoProvider::new(
            fb.base_url,
            token,
            fb.assumed_error_km,
            UreqFetch,
        )));
    }
    Ok(Enricher::new(table, GeoResolver::new(providers)))
}

/// Apply `f` to every relation, on one thread each when `parallel`,
/// returning results in relation order.
fn per_relation<T: Send>(
    rels: &[RelationKey],
    parallel: bool,
    f: impl Fn(&RelationKey) -> T + Sync,
) -> Vec<T> {
    if !parallel {
        return rels.iter().map(&f).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = rels.iter().map(|r| s.spawn(|| f(r))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("analysis thread panicked"))
            .collect()
    })
}

fn traceroutes(store: &Store, rel: &RelationKey) -> Vec<TracerouteRun> {
    store
        .query(&StoreQuery::all(RecordKind::Traceroute).for_relation(rel))
        .into_iter()
        .filter_map(|r| match r {
            Record::Traceroute(t) => Some(t),
            Record::Ping(_) => None,
        })
        .collect()
}

fn table_format(f: Option<OutputFormat>) -> CliResult<TableFormat> {
    match f {
        None | Some(OutputFormat::Text) => Ok(TableFormat::Text),
        Some(OutputFormat::Csv) => Ok(TableFormat::Csv),
        Some(other) => fail(
            Exit::Usage,
            format!("{other:?} output is only available for graphs"),
        ),
    }
}

fn graph_format(f: Option<OutputFormat>) -> CliResult<GraphFormat> {
    match f {
        None | Some(OutputFormat::Dot) => Ok(GraphFormat::Dot),
        Some(OutputFormat::Geojson) => Ok(GraphFormat::Geojson),
        Some(OutputFormat::Csv) => Ok(GraphFormat::Csv),
        Some(OutputFormat::Text) => fail(Exit::Usage, "graphs are written as dot, geojson or csv"),
    }
}

fn empty_selection<T>(what: &str) -> CliResult<T> {
    fail(
        Exit::EmptySelection,
        format!("empty selection: no {what} match the relation filter"),
    )
}

pub(crate) fn cmd_analyze(
    args: &AnalyzeArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult {
    if !(args.threshold >= 0.0 && args.threshold <= 100.0) {
        return fail(Exit::Usage, "--threshold must be a percentage in [0, 100]");
    }
    if args.bucket_seconds == 0 {
        return fail(Exit::Usage, "--bucket-seconds must be positive");
    }
    let config = args.store.load_config()?;
    let store = open_store(&args.store)?;
    let rels: Vec<RelationKey> = relations(&store, config.as_ref())
        .into_iter()
        .filter(|r| selected(r, args))
        .collect();
    let par = args.parallel_by_relation;

    match args.artifact {
        Artifact::RttSeries | Artifact::Cdf => {
            let format = table_format(args.format)?;
            let bucket_us = args.bucket_seconds * 1_000_000;
            let series: Vec<_> = per_relation(&rels, par, |rel| {
                let pings = store.query(&StoreQuery::all(RecordKind::Ping).for_relation(rel));
                let buckets =
                    bucket_rtt_series(pings.iter().filter_map(Record::as_ping), bucket_us);
                (rel.clone(), buckets)
            })
            .into_iter()
            .filter(|(_, b)| !b.is_empty())
            .collect();
            if series.is_empty() {
                return empty_selection("answered pings");
            }
            let table = if args.artifact == Artifact::Cdf {
                let cdfs: Vec<_> = series
                    .iter()
                    .map(|(r, b)| (r.clone(), mean_rtt_cdf(b)))
                    .collect();
                cdf_rows(&cdfs)
            } else {
                rtt_series_rows(&series)
            };
            write_table(&table, format, args, out)
        }
        Artifact::Hops => {
            let format = table_format(args.format)?;
            let stats: Vec<_> = per_relation(&rels, par, |rel| {
                hop_count_stats(rel, &traceroutes(&store, rel))
            })
            .into_iter()
            .flatten()
            .collect();
            if stats.is_empty() {
                return empty_selection("traceroute runs that reached their destination");
            }
            write_table(&hop_count_rows(&stats), format, args, out)
        }
        Artifact::InterAs | Artifact::InterCountry | Artifact::Graph => {
            let enricher = enricher(args, config.as_ref())?;
            let per_rel: Vec<(usize, Vec<LinkObservation>)> = per_relation(&rels, par, |rel| {
                let runs = traceroutes(&store, rel);
                (runs.len(), link_shares(rel, &runs, &enricher))
            });
            if per_rel.iter().all(|(n, _)| *n == 0) {
                return empty_selection("traceroute runs");
            }
            let obs: Vec<LinkObservation> = per_rel.into_iter().flat_map(|(_, o)| o).collect();
            if args.artifact == Artifact::Graph {
                let opts = GraphOptions {
                    threshold: args.threshold,
                    inter_as_dashed: !args.intra_as_dashed,
                    exclude_implausible: args.exclude_implausible,
                };
                let g = export_route_graph(&obs, &opts, graph_format(args.format)?);
                emit(&g.document, args.out.as_deref(), out)?;
                match &args.out {
                    Some(p) => {
                        let mut name = p.clone().into_os_string();
                        name.push(".unlocatable.txt");
                        emit(&g.sidecar(), Some(Path::new(&name)), out)?;
                    }
                    None if !g.unlocatable.is_empty() => {
                        let _ = writeln!(err, "unlocatable routers (not drawn on maps):");
                        let _ = err.write_all(g.sidecar().as_bytes());
                    }
                    None => {}
                }
                return Ok(());
            }
            let format = table_format(args.format)?;
            let grouping = if args.artifact == Artifact::InterAs {
                Grouping::ByAs
            } else {
                Grouping::ByCountry
            };
            let rows = crossing_table(
                &obs,
                CrossingOptions {
                    grouping,
                    threshold: args.threshold,
                    exclude_implausible: args.exclude_implausible,
                },
            );
            write_table(&crossing_table_rows(&rows), format, args, out)
        }
    }
}

fn write_table(
    table: &Table,
    format: TableFormat,
    args: &AnalyzeArgs,
    out: &mut dyn Write,
) -> CliResult {
    emit(&table.render(format), args.out.as_deref(), out)
}
