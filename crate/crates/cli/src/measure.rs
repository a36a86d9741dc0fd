use std::io::Write;
use std::net::IpAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Once;

use clap::Args;
use routescope::icmp::Family;
use routescope::probe::{
    identifier_for, run_workers, Clock, ProbeError, ProbeSchedule, Prober, RawIcmpTransport,
    SourceWorker, SystemClock, TransportError, WorkerSummary,
};
use routescope::sim::{run_scenario, ScenarioConfig, SimError, SimTopology, DEFAULT_START_US};
use routescope::store::{write_ndjson, Record, Store};

use crate::config::Config;
use crate::{emit, fail, CliResult, Exit, ScheduleArgs, WithExit};

static STOP: AtomicBool = AtomicBool::new(false);
static HANDLER: Once = Once::new();

#[derive(Debug, Clone, Args)]
pub struct MeasureArgs {
    /// Configuration file
    #[arg(long)]
    pub config: PathBuf,
    /// Measure against this simulated topology instead of the network
    #[arg(long, value_name = "TOPOLOGY")]
    pub sim: Option<PathBuf>,
    /// Seconds to measure; live mode runs until interrupted when omitted
    #[arg(long)]
    pub duration: Option<u64>,
    /// Simulator seed (also perturbs traceroute jitter)
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Simulated start time in µs since the epoch [default: 2022-01-01T00:00:00Z]
    #[arg(long)]
    pub start_us: Option<u64>,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimRunArgs {
    /// Topology file (TOML)
    #[arg(long)]
    pub topology: PathBuf,
    /// Source address; repeat for several
    #[arg(long = "source", required = true)]
    pub sources: Vec<IpAddr>,
    /// Destination address; repeat for several
    #[arg(long = "destination", required = true)]
    pub destinations: Vec<IpAddr>,
    /// Simulated seconds
    #[arg(long, default_value_t = 300)]
    pub duration: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Simulated start time in µs since the epoch [default: 2022-01-01T00:00:00Z]
    #[arg(long)]
    pub start_us: Option<u64>,
    /// Output file [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

fn sim_exit(e: &SimError) -> Exit {
    match e {
        SimError::Probe(_) => Exit::Runtime,
        _ => Exit::Usage,
    }
}

type Summaries = Vec<(IpAddr, WorkerSummary)>;

fn simulate(topology: &PathBuf, config: ScenarioConfig) -> CliResult<(Vec<Record>, Summaries)> {
    let topo = SimTopology::load(topology).map_err(|e| {
        let exit = sim_exit(&e);
        crate::CliError {
            exit,
            error: anyhow::anyhow!("{}: {e}", topology.display()),
        }
    })?;
    match run_scenario(&topo, &config) {
        Ok(o) => Ok((o.records, o.summaries)),
        Err(e) => fail(sim_exit(&e), e),
    }
}

fn report(out: &mut dyn Write, summaries: &[(IpAddr, WorkerSummary)]) -> CliResult {
    for (source, s) in summaries {
        writeln!(
            out,
            "{source}: {} ping(s), {} traceroute cycle(s), {} traceroute run(s)",
            s.pings, s.traceroute_cycles, s.traceroute_runs
        )
        .exit(Exit::Runtime)?;
    }
    Ok(())
}

pub(crate) fn cmd_measure(
    args: &MeasureArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult {
    let config = Config::load(&args.config).exit(Exit::Usage)?;
    let schedule = args.schedule.apply(&config.schedule)?;
    match &args.sim {
        Some(topology) => {
            let Some(duration_s) = args.duration else {
                return fail(Exit::Usage, "--sim needs --duration");
            };
            let scenario = ScenarioConfig {
                sources: config.sources.iter().map(|e| e.address).collect(),
                destinations: config.destinations.iter().map(|e| e.address).collect(),
                schedule,
                start_us: args.start_us.unwrap_or(DEFAULT_START_US),
                duration_s,
                seed: args.seed,
                trace: false,
            };
            let (records, summaries) = simulate(topology, scenario)?;
            let store = Store::open(&config.store_path).exit(Exit::Runtime)?;
            store.append_all(records).exit(Exit::Runtime)?;
            report(out, &summaries)
        }
        None => measure_live(&config, schedule, args, out, err),
    }
}

fn measure_live(
    config: &Config,
    schedule: ProbeSchedule,
    args: &MeasureArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult {
    let clock = SystemClock::new();
    let epoch = clock.now_us() / 1_000_000;
    // Sockets first: without privileges nothing touches the store.
    let mut workers = Vec::new();
    for src in &config.sources {
        let transport = match RawIcmpTransport::open(src.address, clock.clone()) {
            Ok(t) => t,
            Err(e @ TransportError::PermissionDenied(_)) => return fail(Exit::Privilege, e),
            Err(e) => return fail(Exit::Transport, format!("{}: {e}", src.address)),
        };
        let destinations: Vec<IpAddr> = config
            .destinations
            .iter()
            .map(|d| d.address)
            .filter(|d| Family::of(*d) == Family::of(src.address) && *d != src.address)
            .collect();
        let prober = Prober::new(
            transport,
            clock.clone(),
            identifier_for(src.address, epoch),
            &schedule,
        );
        workers.push(
            SourceWorker::new(prober, destinations, schedule.clone(), epoch).exit(Exit::Usage)?,
        );
    }
    let store = Store::open(&config.store_path).exit(Exit::Runtime)?;

    HANDLER.call_once(|| {
        if let Err(e) = ctrlc::set_handler(|| STOP.store(true, Ordering::Relaxed)) {
            log::warn!("cannot install signal handler: {e}");
        }
    });
    STOP.store(false, Ordering::Relaxed);
    let end = match args.duration {
        Some(d) => clock.now_us() + d * 1_000_000,
        None => u64::MAX,
    };
    log::info!("measuring from {} source(s)", workers.len());
    let results = run_workers(workers, end, &store, &STOP);

    let mut summaries = Vec::new();
    let mut worst = None;
    for (src, r) in config.sources.iter().zip(results) {
        match r {
            Ok(s) => summaries.push((src.address, s)),
            Err(e) => {
                let exit = match e {
                    ProbeError::Transport(_) => Exit::Transport,
                    _ => Exit::Runtime,
                };
                let _ = writeln!(err, "{}: {e}", src.address);
                worst =
                    Some(worst.map_or(exit, |w: Exit| if w == Exit::Transport { w } else { exit }));
            }
        }
    }
    report(out, &summaries)?;
    match worst {
        Some(exit) => fail(exit, "measurement stopped after worker failure"),
        None => Ok(()),
    }
}

pub(crate) fn cmd_sim_run(args: &SimRunArgs, out: &mut dyn Write) -> CliResult {
    let schedule = args.schedule.apply(&ProbeSchedule::default())?;
    let scenario = ScenarioConfig {
        sources: args.sources.clone(),
        destinations: args.destinations.clone(),
        schedule,
        start_us: args.start_us.unwrap_or(DEFAULT_START_US),
        duration_s: args.duration,
        seed: args.seed,
        trace: false,
    };
    let (records, _) = simulate(&args.topology, scenario)?;
    let mut buf = Vec::new();
    write_ndjson(&mut buf, &records).exit(Exit::Runtime)?;
    emit(
        std::str::from_utf8(&buf).expect("canonical JSON is UTF-8"),
        args.out.as_deref(),
        out,
    )
}
