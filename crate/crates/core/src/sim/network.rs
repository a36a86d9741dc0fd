use std::collections::HashMap;

use super::topology::{NodeIdx, NodeKind, Policy, SimTopology};

const MICRO_TOKENS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    NoRoute,
    /// The next hop is a host other than the destination.
    HostTransit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardOutcome {
    Delivered { node: NodeIdx },
    TimeExceeded { router: NodeIdx },
    Dropped(DropReason),
}

/// Result of pushing one probe through the network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Forwarded {
    pub outcome: ForwardOutcome,
    /// Nodes visited, starting with the sender.
    pub path: Vec<NodeIdx>,
    /// Sum of link latencies along `path`.
    pub one_way_us: u64,
    /// The final node's policy allowed an ICMP response.
    pub responds: bool,
}

/// One forwarded probe, kept when tracing is enabled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeTrace {
    pub sent_at: u64,
    pub destination: NodeIdx,
    pub ttl: u8,
    pub prefix: u32,
    pub forwarded: Forwarded,
}

#[derive(Debug, Clone, Copy)]
struct Bucket {
    micro_tokens: u64,
    last_us: u64,
}

/// Mutable simulator state: the topology as changed by the events that
/// have fired, per-router token buckets, and an optional probe trace.
#[derive(Debug, Clone)]
pub struct SimNetwork {
    topology: SimTopology,
    start_us: u64,
    next_event: usize,
    distances: HashMap<NodeIdx, Vec<u64>>,
    buckets: HashMap<NodeIdx, Bucket>,
    trace: Option<Vec<ProbeTrace>>,
}

impl SimNetwork {
    /// `start_us` is the virtual time that event offsets count from.
    pub fn new(topology: SimTopology, start_us: u64) -> Self {
        Self {
            topology,
            start_us,
            next_event: 0,
            distances: HashMap::new(),
            buckets: HashMap::new(),
            trace: None,
        }
    }

    pub fn topology(&self) -> &SimTopology {
        &self.topology
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[ProbeTrace] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Apply every event scheduled at or before `now_us`.
    pub fn advance_to(&mut self, now_us: u64) {
        while let Some((at, change)) = self.topology.events.get(self.next_event) {
            if self.start_us + *at > now_us {
                break;
            }
            let change = change.clone();
            // Events were replayed during validation, so they apply cleanly.
            self.topology.apply(&change).expect("validated event");
            self.distances.clear();
            self.next_event += 1;
        }
    }

    fn distances(&mut self, destination: NodeIdx) -> &[u64] {
        let topo = &self.topology;
        self.distances
            .entry(destination)
            .or_insert_with(|| topo.distances_to(destination))
    }

    /// Forward a probe from `from` toward `destination` with the given TTL.
    ///
    /// Each router on the way decrements the TTL and answers with Time
    /// Exceeded when it reaches zero; the destination host accepts any TTL.
    /// The ECMP index at each hop is `prefix mod group size`.
    pub fn forward(
        &mut self,
        from: NodeIdx,
        destination: NodeIdx,
        ttl: u8,
        prefix: u32,
        sent_at: u64,
    ) -> Forwarded {
        self.advance_to(sent_at);
        let mut node = from;
        let mut path = vec![from];
        let mut one_way_us = 0u64;
        let mut remaining = ttl;
        let outcome = loop {
            let group = {
                let dist = self.distances(destination).to_vec();
                self.topology.candidates(node, destination, &dist)
            };
            if group.is_empty() {
                break ForwardOutcome::Dropped(DropReason::NoRoute);
            }
            let next = group[prefix as usize % group.len()];
            let Some(latency) = self.topology.latency(node, next) else {
                break ForwardOutcome::Dropped(DropReason::NoRoute);
            };
            one_way_us += latency;
            node = next;
            path.push(node);
            if node == destination {
                break ForwardOutcome::Delivered { node };
            }
            if self.topology.nodes()[node].kind == NodeKind::Host {
                break ForwardOutcome::Dropped(DropReason::HostTransit);
            }
            remaining = remaining.saturating_sub(1);
            if remaining == 0 {
                break ForwardOutcome::TimeExceeded { router: node };
            }
        };
        let responds = match outcome {
            ForwardOutcome::Delivered { node } | ForwardOutcome::TimeExceeded { router: node } => {
                self.allow_response(node, sent_at + one_way_us)
            }
            ForwardOutcome::Dropped(_) => false,
        };
        let forwarded = Forwarded {
            outcome,
            path,
            one_way_us,
            responds,
        };
        if let Some(trace) = &mut self.trace {
            trace.push(ProbeTrace {
                sent_at,
                destination,
                ttl,
                prefix,
                forwarded: forwarded.clone(),
            });
        }
        forwarded
    }

    fn allow_response(&mut self, node: NodeIdx, at_us: u64) -> bool {
        match self.topology.policy(node) {
            Policy::Responsive => true,
            Policy::Silent => false,
            Policy::RateLimit(n) => {
                let cap = u64::from(n) * MICRO_TOKENS;
                let b = self.buckets.entry(node).or_insert(Bucket {
                    micro_tokens: cap,
                    last_us: at_us,
                });
                let elapsed = at_us.saturating_sub(b.last_us);
                b.micro_tokens = (b.micro_tokens + elapsed * u64::from(n)).min(cap);
                b.last_us = b.last_us.max(at_us);
                if b.micro_tokens >= MICRO_TOKENS {
                    b.micro_tokens -= MICRO_TOKENS;
                    true
                } else {
                    false
                }
            }
        }
    }
}
