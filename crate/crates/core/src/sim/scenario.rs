use std::net::IpAddr;
use std::sync::atomic::AtomicBool;

use crate::icmp::Family;
use crate::probe::{
    identifier_for, Clock, ProbeSchedule, Prober, SourceWorker, VirtualClock, WorkerSummary,
};
use crate::store::{Record, VecSink};

use super::network::{ProbeTrace, SimNetwork};
use super::topology::SimTopology;
use super::transport::SimTransport;
use super::SimError;

/// 2022-01-01T00:00:00Z in µs.
pub const DEFAULT_START_US: u64 = 1_640_995_200_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub sources: Vec<IpAddr>,
    /// Each source probes the destinations of its own family.
    pub destinations: Vec<IpAddr>,
    pub schedule: ProbeSchedule,
    pub start_us: u64,
    pub duration_s: u64,
    pub seed: u64,
    /// Keep a per-probe forwarding trace for each source.
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    /// Sorted by timestamp; ties keep source order, then completion order.
    pub records: Vec<Record>,
    pub summaries: Vec<(IpAddr, WorkerSummary)>,
    /// Empty unless tracing was requested.
    pub traces: Vec<(IpAddr, Vec<ProbeTrace>)>,
}

/// A prober wired to its own copy of the simulated network.
pub fn sim_prober(
    topology: &SimTopology,
    source: IpAddr,
    clock: VirtualClock,
    schedule: &ProbeSchedule,
    seed: u64,
) -> Result<Prober<SimTransport, VirtualClock>, SimError> {
    let network = SimNetwork::new(topology.clone(), clock.now_us());
    let transport = SimTransport::new(network, clock.clone(), source)?;
    Ok(Prober::new(
        transport,
        clock,
        identifier_for(source, seed),
        schedule,
    ))
}

/// Run the measurement schedule against the simulator.
///
/// Each source gets its own network instance and virtual clock starting at
/// `start_us`, so sources never influence each other's rate limits.
/// Output depends only on the inputs.
pub fn run_scenario(
    topology: &SimTopology,
    config: &ScenarioConfig,
) -> Result<ScenarioOutcome, SimError> {
    config
        .schedule
        .validate()
        .map_err(|e| SimError::Invalid(e.to_string()))?;
    let end = config.start_us + config.duration_s * 1_000_000;
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    let mut traces = Vec::new();
    for &source in &config.sources {
        let family = Family::of(source);
        let destinations: Vec<IpAddr> = config
            .destinations
            .iter()
            .copied()
            .filter(|d| Family::of(*d) == family && *d != source)
            .collect();
        for d in &destinations {
            if topology.node_by_address(*d).is_none() {
                return Err(SimError::UnknownAddress(*d));
            }
        }
        let clock = VirtualClock::starting_at(config.start_us);
        let mut prober = sim_prober(topology, source, clock, &config.schedule, config.seed)?;
        if config.trace {
            prober.transport_mut().network_mut().enable_trace();
        }
        let mut worker =
            SourceWorker::new(prober, destinations, config.schedule.clone(), config.seed)
                .map_err(|e| SimError::Invalid(e.to_string()))?;
        let sink = VecSink::new();
        let summary = worker
            .run(end, &sink, &AtomicBool::new(false))
            .map_err(|e| SimError::Probe(e.to_string()))?;
        records.extend(sink.take());
        summaries.push((source, summary));
        if config.trace {
            let (transport, _) = worker.into_prober().into_parts();
            traces.push((source, transport.network().trace().to_vec()));
        }
    }
    records.sort_by_key(Record::timestamp);
    Ok(ScenarioOutcome {
        records,
        summaries,
        traces,
    })
}
