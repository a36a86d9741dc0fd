use std::fmt;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::icmp::Family;

/// Per-probe outcome code as stored in records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HopStatus(pub u8);

impl HopStatus {
    /// No response before the reply timeout.
    pub const TIMEOUT: HopStatus = HopStatus(0);
    pub const TIME_EXCEEDED: HopStatus = HopStatus(1);
    pub const ECHO_REPLY: HopStatus = HopStatus(255);

    pub fn is_known(self) -> bool {
        matches!(self, Self::TIMEOUT | Self::TIME_EXCEEDED | Self::ECHO_REPLY)
    }

    pub fn responded(self) -> bool {
        matches!(self, Self::TIME_EXCEEDED | Self::ECHO_REPLY)
    }
}

impl fmt::Display for HopStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PingRecord {
    /// Send time, µs since the Unix epoch.
    pub timestamp: u64,
    pub source: IpAddr,
    pub destination: IpAddr,
    pub status: HopStatus,
    /// µs; present iff `status` is an echo reply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtt: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hop {
    pub hop: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<IpAddr>,
    pub status: HopStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtt: Option<u64>,
}

impl Hop {
    pub fn timeout(hop: u16) -> Self {
        Self {
            hop,
            address: None,
            status: HopStatus::TIMEOUT,
            rtt: None,
        }
    }

    pub fn responded(hop: u16, address: IpAddr, status: HopStatus, rtt: u64) -> Self {
        Self {
            hop,
            address: Some(address),
            status,
            rtt: Some(rtt),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracerouteRun {
    /// Start of the run, µs since the Unix epoch.
    pub timestamp: u64,
    pub source: IpAddr,
    pub destination: IpAddr,
    /// Index of the run within its measurement cycle.
    pub round: u32,
    pub hops: Vec<Hop>,
}

impl TracerouteRun {
    /// The hop that answered with an echo reply, if the run reached the destination.
    pub fn destination_hop(&self) -> Option<&Hop> {
        self.hops
            .last()
            .filter(|h| h.status == HopStatus::ECHO_REPLY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Ping,
    Traceroute,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Record {
    Ping(PingRecord),
    Traceroute(TracerouteRun),
}

impl Record {
    pub fn timestamp(&self) -> u64 {
        match self {
            Record::Ping(p) => p.timestamp,
            Record::Traceroute(t) => t.timestamp,
        }
    }

    pub fn source(&self) -> IpAddr {
        match self {
            Record::Ping(p) => p.source,
            Record::Traceroute(t) => t.source,
        }
    }

    pub fn destination(&self) -> IpAddr {
        match self {
            Record::Ping(p) => p.destination,
            Record::Traceroute(t) => t.destination,
        }
    }

    pub fn kind(&self) -> RecordKind {
        match self {
            Record::Ping(_) => RecordKind::Ping,
            Record::Traceroute(_) => RecordKind::Traceroute,
        }
    }

    pub fn as_ping(&self) -> Option<&PingRecord> {
        match self {
            Record::Ping(p) => Some(p),
            Record::Traceroute(_) => None,
        }
    }

    pub fn as_traceroute(&self) -> Option<&TracerouteRun> {
        match self {
            Record::Traceroute(t) => Some(t),
            Record::Ping(_) => None,
        }
    }

    /// Check the record-model invariants, collecting every violation.
    pub fn validate(&self) -> Result<(), Vec<FieldIssue>> {
        let mut issues = Vec::new();
        match self {
            Record::Ping(p) => validate_ping(p, &mut issues),
            Record::Traceroute(t) => validate_run(t, &mut issues),
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }
}

impl From<PingRecord> for Record {
    fn from(p: PingRecord) -> Self {
        Record::Ping(p)
    }
}

impl From<TracerouteRun> for Record {
    fn from(t: TracerouteRun) -> Self {
        Record::Traceroute(t)
    }
}

/// One invariant violation, located by a JSON-path-like field name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldIssue {
    pub field: String,
    pub message: String,
}

impl FieldIssue {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn check_common(timestamp: u64, source: IpAddr, destination: IpAddr, issues: &mut Vec<FieldIssue>) {
    if timestamp == 0 {
        issues.push(FieldIssue::new("timestamp", "must be positive"));
    }
    if Family::of(source) != Family::of(destination) {
        issues.push(FieldIssue::new(
            "destination",
            "address family differs from source",
        ));
    }
}

fn validate_ping(p: &PingRecord, issues: &mut Vec<FieldIssue>) {
    check_common(p.timestamp, p.source, p.destination, issues);
    match (p.status, p.rtt) {
        (HopStatus::ECHO_REPLY, None) => {
            issues.push(FieldIssue::new("rtt", "required when status is 255"))
        }
        (HopStatus::ECHO_REPLY, Some(_)) | (HopStatus::TIMEOUT, None) => {}
        (HopStatus::TIMEOUT, Some(_)) => {
            issues.push(FieldIssue::new("rtt", "must be absent when status is 0"))
        }
        (s, _) => issues.push(FieldIssue::new(
            "status",
            format!("ping status must be 0 or 255, got {s}"),
        )),
    }
}

fn validate_run(t: &TracerouteRun, issues: &mut Vec<FieldIssue>) {
    check_common(t.timestamp, t.source, t.destination, issues);
    let family = Family::of(t.source);
    let mut previous = 0u16;
    for (i, hop) in t.hops.iter().enumerate() {
        let at = |field: &str| format!("hops[{i}].{field}");
        if hop.hop <= previous {
            issues.push(FieldIssue::new(at("hop"), format!("must be > {previous}")));
        }
        previous = hop.hop;
        if !hop.status.is_known() {
            issues.push(FieldIssue::new(
                at("status"),
                format!("unknown status {}", hop.status),
            ));
            continue;
        }
        if hop.status == HopStatus::ECHO_REPLY && i + 1 != t.hops.len() {
            issues.push(FieldIssue::new(
                at("status"),
                "echo reply must be the last hop",
            ));
        }
        let responded = hop.status.responded();
        match (&hop.address, responded) {
            (None, true) => issues.push(FieldIssue::new(
                at("address"),
                "required for a responding hop",
            )),
            (Some(_), false) => issues.push(FieldIssue::new(
                at("address"),
                "must be absent when status is 0",
            )),
            (Some(a), true) if Family::of(*a) != family => issues.push(FieldIssue::new(
                at("address"),
                "address family differs from source",
            )),
            _ => {}
        }
        match (hop.rtt, responded) {
            (None, true) => {
                issues.push(FieldIssue::new(at("rtt"), "required for a responding hop"))
            }
            (Some(_), false) => issues.push(FieldIssue::new(
                at("rtt"),
                "must be absent when status is 0",
            )),
            _ => {}
        }
    }
}
