//! Deterministic in-process network for exercising the prober.
//!
//! Topologies are TOML files; see [`TopologyFile`] for the schema. Time is
//! virtual and integral (µs), so repeated runs produce identical records.

mod network;
mod scenario;
mod topology;
mod transport;

use std::net::IpAddr;

use thiserror::Error;

pub use network::{DropReason, ForwardOutcome, Forwarded, ProbeTrace, SimNetwork};
pub use scenario::{run_scenario, sim_prober, ScenarioConfig, ScenarioOutcome, DEFAULT_START_US};
pub use topology::{
    ChangeSpec, EventSpec, LinkSpec, Node, NodeIdx, NodeKind, NodeSpec, Policy, RouteSpec,
    SimTopology, TopologyFile,
};
pub use transport::SimTransport;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("topology parse error: {0}")]
    Parse(String),
    #[error("invalid topology: {0}")]
    Invalid(String),
    #[error("no simulated node has address {0}")]
    UnknownAddress(IpAddr),
    #[error("probe engine failed: {0}")]
    Probe(String),
}
