use std::collections::{BTreeMap, HashMap};
use std::net::IpAddr;

use crate::icmp::{
    decode_message, ChecksumStatus, EchoKind, Family, IcmpMessage, PseudoHeader, RunCrafter,
};
use crate::store::{Hop, HopStatus, PingRecord, Record, TracerouteRun};

use super::transport::{Clock, Received, Transport};
use super::{ProbeError, ProbeSchedule};

pub type RunId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Purpose {
    Ping(u64),
    Trace { run: RunId, ttl: u8 },
}

#[derive(Debug, Clone, Copy)]
struct Outstanding {
    purpose: Purpose,
    sent_at: u64,
}

#[derive(Debug)]
struct PingState {
    destination: IpAddr,
    sent_at: u64,
    deadline: u64,
}

#[derive(Debug)]
struct RunState {
    destination: IpAddr,
    round: u32,
    started: u64,
    deadline: u64,
    /// Indexed by TTL - 1.
    replies: Vec<Option<(IpAddr, HopStatus, u64)>>,
    /// Lowest TTL answered by the destination.
    echo_ttl: Option<u8>,
}

impl RunState {
    fn resolved(&self) -> bool {
        let last = self.echo_ttl.map_or(self.replies.len(), usize::from);
        self.replies[..last].iter().all(Option::is_some)
    }

    fn into_record(self, source: IpAddr) -> TracerouteRun {
        let last = match self.echo_ttl {
            Some(t) => usize::from(t),
            // Unfinished run: keep up to the last router that answered.
            None => self
                .replies
                .iter()
                .rposition(Option::is_some)
                .map_or(0, |i| i + 1),
        };
        let hops = self.replies[..last]
            .iter()
            .enumerate()
            .map(|(i, reply)| {
                let hop = (i + 1) as u16;
                match *reply {
                    Some((addr, status, rtt)) => Hop::responded(hop, addr, status, rtt),
                    None => Hop::timeout(hop),
                }
            })
            .collect();
        TracerouteRun {
            timestamp: self.started,
            source,
            destination: self.destination,
            round: self.round,
            hops,
        }
    }
}

/// Counters for traffic that did not produce a record on its own.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProberStats {
    pub sent: u64,
    pub matched: u64,
    /// Replies whose key matched nothing outstanding (late, duplicate, foreign).
    pub unmatched: u64,
    pub checksum_mismatches: u64,
    pub undecodable: u64,
}

/// Request/response bookkeeping for one source address.
pub struct Prober<T, C> {
    transport: T,
    clock: C,
    source: IpAddr,
    family: Family,
    identifier: u16,
    reply_timeout_us: u64,
    crafting: bool,
    /// Sequence counters, one space per destination.
    sequences: HashMap<IpAddr, u16>,
    outstanding: HashMap<(IpAddr, u16), Outstanding>,
    pings: BTreeMap<u64, PingState>,
    runs: BTreeMap<RunId, RunState>,
    next_id: u64,
    stats: ProberStats,
}

impl<T: Transport, C: Clock> Prober<T, C> {
    pub fn new(transport: T, clock: C, identifier: u16, schedule: &ProbeSchedule) -> Self {
        let source = transport.local_address();
        let family = transport.family();
        Self {
            transport,
            clock,
            source,
            family,
            identifier,
            reply_timeout_us: schedule.reply_timeout_us(),
            crafting: schedule.crafting,
            sequences: HashMap::new(),
            outstanding: HashMap::new(),
            pings: BTreeMap::new(),
            runs: BTreeMap::new(),
            next_id: 0,
            stats: ProberStats::default(),
        }
    }

    pub fn source(&self) -> IpAddr {
        self.source
    }

    pub fn identifier(&self) -> u16 {
        self.identifier
    }

    pub fn stats(&self) -> ProberStats {
        self.stats
    }

    pub fn clock(&self) -> &C {
        &self.clock
    }

    pub fn into_parts(self) -> (T, C) {
        (self.transport, self.clock)
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    pub fn is_idle(&self) -> bool {
        self.pings.is_empty() && self.runs.is_empty()
    }

    pub fn has_run(&self, run: RunId) -> bool {
        self.runs.contains_key(&run)
    }

    fn pseudo(&self, destination: IpAddr) -> Option<PseudoHeader> {
        PseudoHeader::from_addrs(self.source, destination)
    }

    fn check_family(&self, destination: IpAddr) -> Result<(), ProbeError> {
        if Family::of(destination) != self.family {
            return Err(ProbeError::FamilyMismatch {
                source_address: self.source,
                destination_address: destination,
            });
        }
        Ok(())
    }

    fn reserve(&mut self, destination: IpAddr, count: u16) -> u16 {
        let next = self.sequences.entry(destination).or_insert(0);
        let base = *next;
        *next = next.wrapping_add(count);
        base
    }

    fn allocate_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    /// Send one echo request; the result arrives through [`Prober::poll_once`].
    pub fn send_ping(&mut self, destination: IpAddr) -> Result<u64, ProbeError> {
        self.check_family(destination)?;
        let sequence = self.reserve(destination, 1);
        let now = self.clock.now_us();
        let bytes = RunCrafter::uncrafted(self.family, self.pseudo(destination)).request(
            self.identifier,
            sequence,
            now,
        )?;
        let id = self.allocate_id();
        self.transport.send(&bytes, 64, destination)?;
        self.stats.sent += 1;
        self.outstanding.insert(
            (destination, sequence),
            Outstanding {
                purpose: Purpose::Ping(id),
                sent_at: now,
            },
        );
        self.pings.insert(
            id,
            PingState {
                destination,
                sent_at: now,
                deadline: now + self.reply_timeout_us,
            },
        );
        Ok(id)
    }

    /// Send the whole TTL sequence `1..=max_ttl` back to back.
    ///
    /// All requests of the run carry the checksum of the first one unless
    /// crafting is disabled.
    pub fn start_traceroute(
        &mut self,
        destination: IpAddr,
        round: u32,
        max_ttl: u8,
    ) -> Result<RunId, ProbeError> {
        self.check_family(destination)?;
        let max_ttl = max_ttl.max(1);
        let base = self.reserve(destination, u16::from(max_ttl));
        let started = self.clock.now_us();
        let pseudo = self.pseudo(destination);
        let crafter = if self.crafting {
            RunCrafter::constant(self.family, pseudo, self.identifier, base, started)?
        } else {
            RunCrafter::uncrafted(self.family, pseudo)
        };
        let run = self.allocate_id();
        self.runs.insert(
            run,
            RunState {
                destination,
                round,
                started,
                deadline: started + self.reply_timeout_us,
                replies: vec![None; usize::from(max_ttl)],
                echo_ttl: None,
            },
        );
        for ttl in 1..=max_ttl {
            let sequence = base.wrapping_add(u16::from(ttl - 1));
            let now = self.clock.now_us();
            let bytes = crafter.request(self.identifier, sequence, now)?;
            self.transport.send(&bytes, ttl, destination)?;
            self.stats.sent += 1;
            self.outstanding.insert(
                (destination, sequence),
                Outstanding {
                    purpose: Purpose::Trace { run, ttl },
                    sent_at: now,
                },
            );
        }
        Ok(run)
    }

    /// Earliest instant at which an outstanding probe times out.
    pub fn next_deadline(&self) -> Option<u64> {
        let p = self.pings.values().map(|p| p.deadline).min();
        let r = self.runs.values().map(|r| r.deadline).min();
        p.into_iter().chain(r).min()
    }

    /// Wait for at most one response (or until `until` / the next timeout)
    /// and return every record completed by that step.
    pub fn poll_once(&mut self, until: u64) -> Result<Vec<Record>, ProbeError> {
        let mut done = self.expire(self.clock.now_us());
        if !done.is_empty() {
            return Ok(done);
        }
        let wake = self.next_deadline().map_or(until, |d| d.min(until));
        if let Some(received) = self.transport.receive(wake)? {
            self.clock.sleep_until(received.timestamp);
            done.extend(self.handle(received));
        }
        done.extend(self.expire(self.clock.now_us()));
        Ok(done)
    }

    fn handle(&mut self, received: Received) -> Vec<Record> {
        let pseudo = PseudoHeader::from_addrs(received.source, self.source);
        let decoded = match decode_message(&received.bytes, self.family, pseudo.as_ref()) {
            Ok(d) => d,
            Err(e) => {
                log::debug!("undecodable message from {}: {e}", received.source);
                self.stats.undecodable += 1;
                return Vec::new();
            }
        };
        if decoded.checksum == ChecksumStatus::Mismatch {
            self.stats.checksum_mismatches += 1;
        }
        let (key, status) = match &decoded.message {
            IcmpMessage::Echo(p)
                if p.kind == EchoKind::Reply && p.identifier == self.identifier =>
            {
                ((received.source, p.sequence), HopStatus::ECHO_REPLY)
            }
            IcmpMessage::TimeExceeded { quoted, .. } if quoted.identifier == self.identifier => (
                (quoted.original_destination, quoted.sequence),
                HopStatus::TIME_EXCEEDED,
            ),
            _ => return Vec::new(),
        };
        let Some(pending) = self.outstanding.remove(&key) else {
            self.stats.unmatched += 1;
            return Vec::new();
        };
        self.stats.matched += 1;
        let rtt = received.timestamp.saturating_sub(pending.sent_at);
        match pending.purpose {
            Purpose::Ping(id) => {
                let Some(ping) = self.pings.remove(&id) else {
                    return Vec::new();
                };
                if status != HopStatus::ECHO_REPLY {
                    // A ping that expired in transit: keep waiting, it will time out.
                    self.pings.insert(id, ping);
                    return Vec::new();
                }
                vec![Record::Ping(PingRecord {
                    timestamp: ping.sent_at,
                    source: self.source,
                    destination: ping.destination,
                    status,
                    rtt: Some(rtt),
                })]
            }
            Purpose::Trace { run, ttl } => {
                let Some(state) = self.runs.get_mut(&run) else {
                    return Vec::new();
                };
                state.replies[usize::from(ttl) - 1] = Some((received.source, status, rtt));
                if status == HopStatus::ECHO_REPLY {
                    state.echo_ttl = Some(state.echo_ttl.map_or(ttl, |e| e.min(ttl)));
                }
                if state.resolved() {
                    self.finish_run(run).into_iter().collect()
                } else {
                    Vec::new()
                }
            }
        }
    }

    fn finish_run(&mut self, run: RunId) -> Option<Record> {
        let state = self.runs.remove(&run)?;
        self.outstanding
            .retain(|_, o| !matches!(o.purpose, Purpose::Trace { run: r, .. } if r == run));
        Some(Record::Traceroute(state.into_record(self.source)))
    }

    fn expire(&mut self, now: u64) -> Vec<Record> {
        let mut done = Vec::new();
        let expired_pings: Vec<u64> = self
            .pings
            .iter()
            .filter(|(_, p)| p.deadline <= now)
            .map(|(id, _)| *id)
            .collect();
        for id in expired_pings {
            if let Some(p) = self.pings.remove(&id) {
                self.outstanding
                    .retain(|_, o| o.purpose != Purpose::Ping(id));
                done.push(Record::Ping(PingRecord {
                    timestamp: p.sent_at,
                    source: self.source,
                    destination: p.destination,
                    status: HopStatus::TIMEOUT,
                    rtt: None,
                }));
            }
        }
        let expired_runs: Vec<RunId> = self
            .runs
            .iter()
            .filter(|(_, r)| r.deadline <= now)
            .map(|(id, _)| *id)
            .collect();
        for run in expired_runs {
            done.extend(self.finish_run(run));
        }
        done
    }

    /// Close everything outstanding with whatever has been received so far.
    pub fn abandon_all(&mut self) -> Vec<Record> {
        self.expire(u64::MAX)
    }
}

/// Measure one RTT. The prober must have nothing else in flight.
pub fn run_ping_once<T: Transport, C: Clock>(
    prober: &mut Prober<T, C>,
    destination: IpAddr,
) -> Result<PingRecord, ProbeError> {
    if !prober.is_idle() {
        return Err(ProbeError::Busy);
    }
    prober.send_ping(destination)?;
    loop {
        let until = prober.next_deadline().unwrap_or(0);
        if let Some(Record::Ping(p)) = prober.poll_once(until)?.into_iter().next() {
            return Ok(p);
        }
    }
}

/// Trace the route to `destination` with one burst. The prober must have
/// nothing else in flight.
pub fn run_traceroute<T: Transport, C: Clock>(
    prober: &mut Prober<T, C>,
    destination: IpAddr,
    round: u32,
    max_ttl: u8,
) -> Result<TracerouteRun, ProbeError> {
    if !prober.is_idle() {
        return Err(ProbeError::Busy);
    }
    prober.start_traceroute(destination, round, max_ttl)?;
    loop {
        let until = prober.next_deadline().unwrap_or(0);
        if let Some(Record::Traceroute(t)) = prober.poll_once(until)?.into_iter().next() {
            return Ok(t);
        }
    }
}
