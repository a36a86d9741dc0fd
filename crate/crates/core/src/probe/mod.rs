//! Ping and traceroute probing over an injected transport and clock.
//!
//! A [`Prober`] owns one source address: it sends echo requests, matches
//! replies to outstanding requests and turns them into records. A
//! [`SourceWorker`] drives a prober on the measurement schedule. Real raw
//! sockets and the simulator both satisfy [`Transport`].

mod prober;
mod raw;
mod transport;
mod worker;

use std::fmt;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::icmp::{Family, IcmpError};
use crate::store::StoreError;

pub use prober::{run_ping_once, run_traceroute, Prober, ProberStats, RunId};
pub use raw::RawIcmpTransport;
pub use transport::{Clock, Received, SystemClock, Transport, TransportError, VirtualClock};
pub use worker::{identifier_for, run_workers, SourceWorker, WorkerSummary};

pub use crate::store::HopStatus;

const MICROS: f64 = 1_000_000.0;

/// Identity under which measurements are grouped: IP version, source ISP,
/// destination ISP.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationKey {
    pub ip_version: Family,
    pub source_id: String,
    pub destination_id: String,
    pub source_address: IpAddr,
    pub destination_address: IpAddr,
}

impl RelationKey {
    pub fn new(
        source_id: impl Into<String>,
        source_address: IpAddr,
        destination_id: impl Into<String>,
        destination_address: IpAddr,
    ) -> Result<Self, ProbeError> {
        let ip_version = Family::of(source_address);
        if Family::of(destination_address) != ip_version {
            return Err(ProbeError::FamilyMismatch {
                source_address,
                destination_address,
            });
        }
        Ok(Self {
            ip_version,
            source_id: source_id.into(),
            destination_id: destination_id.into(),
            source_address,
            destination_address,
        })
    }
}

impl fmt::Display for RelationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} -> {}",
            self.ip_version.label(),
            self.source_id,
            self.destination_id
        )
    }
}

/// Measurement cadence. Intervals and timeouts are in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSchedule {
    pub ping_interval: f64,
    pub traceroute_interval: f64,
    pub traceroute_rounds: u32,
    pub max_ttl: u8,
    pub reply_timeout: f64,
    /// Uniform jitter applied to each traceroute cycle start, as a fraction
    /// of `traceroute_interval`.
    pub traceroute_jitter: f64,
    /// Keep the checksum constant within a traceroute run.
    pub crafting: bool,
}

impl Default for ProbeSchedule {
    fn default() -> Self {
        Self {
            ping_interval: 1.0,
            traceroute_interval: 300.0,
            traceroute_rounds: 3,
            max_ttl: 35,
            reply_timeout: 3.0,
            traceroute_jitter: 0.05,
            crafting: true,
        }
    }
}

impl ProbeSchedule {
    // Written as negations so that NaN fails every check.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ProbeError> {
        let bad = |what: &str| Err(ProbeError::InvalidSchedule(what.to_string()));
        if !(self.ping_interval > 0.0) {
            return bad("ping_interval must be > 0");
        }
        if !(self.traceroute_interval > 0.0) {
            return bad("traceroute_interval must be > 0");
        }
        if !(self.reply_timeout > 0.0) {
            return bad("reply_timeout must be > 0");
        }
        if self.traceroute_rounds == 0 {
            return bad("traceroute_rounds must be >= 1");
        }
        if self.max_ttl == 0 {
            return bad("max_ttl must be in 1..=255");
        }
        if !(0.0..0.5).contains(&self.traceroute_jitter) {
            return bad("traceroute_jitter must be in [0, 0.5)");
        }
        Ok(())
    }

    pub fn ping_interval_us(&self) -> u64 {
        (self.ping_interval * MICROS).round() as u64
    }

    pub fn traceroute_interval_us(&self) -> u64 {
        (self.traceroute_interval * MICROS).round() as u64
    }

    pub fn reply_timeout_us(&self) -> u64 {
        (self.reply_timeout * MICROS).round() as u64
    }
}

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Icmp(#[from] IcmpError),
    #[error("record sink failed: {0}")]
    Sink(#[from] StoreError),
    #[error("prober has probes in flight")]
    Busy,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("{source_address} and {destination_address} belong to different IP families")]
    FamilyMismatch {
        source_address: IpAddr,
        destination_address: IpAddr,
    },
}
