//! Command-line front end: measure, import, export, analyze and sim-run.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | runtime failure (I/O, store) |
//! | 2 | usage or configuration error |
//! | 3 | missing privileges for raw sockets |
//! | 4 | transport failure during measurement |
//! | 5 | documents rejected under `--strict` |
//! | 6 | the selection matched no data |

pub mod config;

mod analyze;
mod measure;
mod records;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use routescope::probe::ProbeSchedule;

pub use analyze::{AnalyzeArgs, Artifact};
pub use config::Config;
pub use measure::{MeasureArgs, SimRunArgs};
pub use records::{ExportArgs, ImportArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Runtime = 1,
    Usage = 2,
    Privilege = 3,
    Transport = 4,
    Rejected = 5,
    EmptySelection = 6,
}

/// An error carrying the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub error: anyhow::Error,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

trait WithExit<T> {
    fn exit(self, exit: Exit) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> WithExit<T> for Result<T, E> {
    fn exit(self, exit: Exit) -> CliResult<T> {
        self.map_err(|e| CliError {
            exit,
            error: e.into(),
        })
    }
}

fn fail<T>(exit: Exit, message: impl fmt::Display) -> CliResult<T> {
    Err(CliError {
        exit,
        error: anyhow::anyhow!("{message}"),
    })
}

#[derive(Debug, Parser)]
#[command(
    name = "routescope",
    version,
    about = "Load-balancing-aware ICMP route measurement and analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Ping/Traceroute schedule, live or against the simulator.
    Measure(MeasureArgs),
    /// Import JSON records into a store.
    Import(ImportArgs),
    /// Write a store as canonical newline-delimited JSON.
    Export(ExportArgs),
    /// Compute a table, series or graph from stored records.
    Analyze(AnalyzeArgs),
    /// Simulate a topology and print the records as NDJSON.
    SimRun(SimRunArgs),
}

/// Overrides for the measurement schedule.
#[derive(Debug, Clone, Default, Args)]
pub struct ScheduleArgs {
    /// Seconds between pings to each destination [default: 1]
    #[arg(long)]
    pub ping_interval: Option<f64>,
    /// Seconds between traceroute cycles [default: 300]
    #[arg(long)]
    pub traceroute_interval: Option<f64>,
    /// Traceroute runs per destination and cycle [default: 3]
    #[arg(long)]
    pub traceroute_rounds: Option<u32>,
    /// Highest TTL / hop limit probed [default: 35]
    #[arg(long)]
    pub max_ttl: Option<u8>,
    /// Seconds to wait for a reply [default: 3]
    #[arg(long)]
    pub reply_timeout: Option<f64>,
    /// Cycle start jitter as a fraction of the traceroute interval [default: 0.05]
    #[arg(long)]
    pub traceroute_jitter: Option<f64>,
    /// Let the checksum vary within a traceroute run (exposes runs to ECMP)
    #[arg(long)]
    pub no_crafting: bool,
}

impl ScheduleArgs {
    pub fn apply(&self, base: &ProbeSchedule) -> CliResult<ProbeSchedule> {
        let mut s = base.clone();
        if let Some(v) = self.ping_interval {
            s.ping_interval = v;
        }
        if let Some(v) = self.traceroute_interval {
            s.traceroute_interval = v;
        }
        if let Some(v) = self.traceroute_rounds {
            s.traceroute_rounds = v;
        }
        if let Some(v) = self.max_ttl {
            s.max_ttl = v;
        }
        if let Some(v) = self.reply_timeout {
            s.reply_timeout = v;
        }
        if let Some(v) = self.traceroute_jitter {
            s.traceroute_jitter = v;
        }
        if self.no_crafting {
            s.crafting = false;
        }
        s.validate().exit(Exit::Usage)?;
        Ok(s)
    }
}

/// Where the store lives: given directly or taken from a config file.
#[derive(Debug, Clone, Default, Args)]
pub struct StoreArgs {
    /// Store directory
    #[arg(long, conflicts_with = "config")]
    pub store: Option<PathBuf>,
    /// Configuration file naming the store
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl StoreArgs {
    fn load_config(&self) -> CliResult<Option<Config>> {
        self.config
            .as_deref()
            .map(Config::load)
            .transpose()
            .exit(Exit::Usage)
    }

    fn store_path(&self, config: Option<&Config>) -> CliResult<PathBuf> {
        match (&self.store, config) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(c)) => Ok(c.store_path.clone()),
            (None, None) => fail(Exit::Usage, "either --store or --config is required"),
        }
    }
}

/// Write `text` to `path`, or to `out` when no path is given.
fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> CliResult {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", p.display()))
            .exit(Exit::Runtime),
        None => out.write_all(text.as_bytes()).exit(Exit::Runtime),
    }
}

/// Parse `args` (including the program name) and execute the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                Exit::Usage
            } else {
                Exit::Ok
            };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code as i32;
        }
    };
    let result = match cli.command {
        Command::Measure(a) => measure::cmd_measure(&a, out, err),
        Command::Import(a) => records::cmd_import(&a, out, err),
        Command::Export(a) => records::cmd_export(&a, out),
        Command::Analyze(a) => analyze::cmd_analyze(&a, out, err),
        Command::SimRun(a) => measure::cmd_sim_run(&a, out),
    };
    let _ = out.flush();
    match result {
        Ok(()) => Exit::Ok as i32,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit as i32
        }
    }
}
