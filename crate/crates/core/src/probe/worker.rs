use std::collections::VecDeque;
use std::net::IpAddr;
use std::sync::atomic::{AtomicBool, Ordering};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::store::{Record, RecordSink};

use super::prober::{Prober, RunId};
use super::transport::{Clock, Transport};
use super::{ProbeError, ProbeSchedule};

const BACKOFF_START_US: u64 = 1_000_000;
const BACKOFF_MAX_US: u64 = 60_000_000;

/// Echo identifier for a source address within one process epoch.
pub fn identifier_for(source: IpAddr, epoch: u64) -> u16 {
    let bytes = match source {
        IpAddr::V4(a) => a.to_ipv6_mapped().octets(),
        IpAddr::V6(a) => a.octets(),
    };
    // FNV-1a over address and epoch, folded to 16 bits.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes.iter().chain(epoch.to_be_bytes().iter()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    (h ^ (h >> 16) ^ (h >> 32) ^ (h >> 48)) as u16
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkerSummary {
    pub pings: u64,
    pub traceroute_runs: u64,
    pub traceroute_cycles: u64,
    pub transport_failures: u64,
}

/// Runs the measurement schedule for one source address.
///
/// Pings to every destination go out together once per ping interval.
/// Traceroute cycles start every traceroute interval (with jitter); within a
/// cycle, destinations are traced one at a time, each for
/// `traceroute_rounds` runs, and a run starts only after the previous one
/// has closed.
pub struct SourceWorker<T, C> {
    prober: Prober<T, C>,
    destinations: Vec<IpAddr>,
    schedule: ProbeSchedule,
    rng: ChaCha8Rng,
}

impl<T: Transport, C: Clock> SourceWorker<T, C> {
    pub fn new(
        prober: Prober<T, C>,
        destinations: Vec<IpAddr>,
        schedule: ProbeSchedule,
        seed: u64,
    ) -> Result<Self, ProbeError> {
        schedule.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from(prober.identifier()).rotate_left(32));
        Ok(Self {
            prober,
            destinations,
            schedule,
            rng,
        })
    }

    pub fn prober(&self) -> &Prober<T, C> {
        &self.prober
    }

    pub fn into_prober(self) -> Prober<T, C> {
        self.prober
    }

    fn cycle_start(&mut self, start: u64, cycle: u64) -> u64 {
        let interval = self.schedule.traceroute_interval_us();
        let grid = start + cycle * interval;
        let j = self.schedule.traceroute_jitter;
        if j == 0.0 {
            return grid;
        }
        let offset = self.rng.random_range(-j..=j) * interval as f64;
        (grid as f64 + offset).round().max(start as f64) as u64
    }

    /// Measure from now until `end_us`, then drain outstanding probes.
    ///
    /// Probes are scheduled while their nominal time is before `end_us`:
    /// pings at `start + k * ping_interval`, traceroute cycles whose grid
    /// point `start + c * traceroute_interval` is before `end_us`.
    pub fn run(
        &mut self,
        end_us: u64,
        sink: &dyn RecordSink,
        stop: &AtomicBool,
    ) -> Result<WorkerSummary, ProbeError> {
        let start = self.prober.clock().now_us();
        let ping_interval = self.schedule.ping_interval_us();
        let trace_interval = self.schedule.traceroute_interval_us();
        let mut end = end_us;
        let mut summary = WorkerSummary::default();

        let mut next_ping = start;
        let mut cycle: u64 = 0;
        let mut next_cycle = (start < end).then(|| self.cycle_start(start, 0));
        let mut queue: VecDeque<(IpAddr, u32)> = VecDeque::new();
        let mut active: Option<RunId> = None;
        let mut backoff = BACKOFF_START_US;

        loop {
            let now = self.prober.clock().now_us();
            if stop.load(Ordering::Relaxed) && end > now {
                end = now;
                next_cycle = None;
                queue.clear();
            }

            let step = self
                .schedule_due(now, end, &mut next_ping, ping_interval, &mut summary)
                .and_then(|()| {
                    if active.is_some_and(|r| !self.prober.has_run(r)) {
                        active = None;
                    }
                    if active.is_none() && queue.is_empty() && next_cycle.is_some_and(|t| t <= now)
                    {
                        for &d in &self.destinations {
                            for round in 0..self.schedule.traceroute_rounds {
                                queue.push_back((d, round));
                            }
                        }
                        cycle += 1;
                        summary.traceroute_cycles += 1;
                        let grid = start + cycle * trace_interval;
                        next_cycle = (grid < end).then(|| self.cycle_start(start, cycle));
                    }
                    if active.is_none() {
                        if let Some((d, round)) = queue.pop_front() {
                            active = Some(self.prober.start_traceroute(
                                d,
                                round,
                                self.schedule.max_ttl,
                            )?);
                            summary.traceroute_runs += 1;
                        }
                    }
                    Ok(())
                });

            let step = step.and_then(|()| {
                let pings_left = next_ping < end;
                if !pings_left
                    && next_cycle.is_none()
                    && queue.is_empty()
                    && active.is_none()
                    && self.prober.is_idle()
                {
                    return Ok(None);
                }
                let mut wake = u64::MAX;
                if pings_left {
                    wake = wake.min(next_ping);
                }
                if active.is_none() && queue.is_empty() {
                    if let Some(t) = next_cycle {
                        wake = wake.min(t);
                    }
                }
                if let Some(d) = self.prober.next_deadline() {
                    wake = wake.min(d);
                }
                Ok(Some(self.prober.poll_once(wake)?))
            });

            match step {
                Ok(None) => break,
                Ok(Some(records)) => {
                    backoff = BACKOFF_START_US;
                    deliver(sink, records)?;
                }
                Err(ProbeError::Transport(e)) => {
                    summary.transport_failures += 1;
                    log::warn!(
                        "transport failure on {}: {e}; retrying",
                        self.prober.source()
                    );
                    deliver(sink, self.prober.abandon_all())?;
                    active = None;
                    let clock_now = self.prober.clock().now_us();
                    self.prober.clock().sleep_until(clock_now + backoff);
                    backoff = (backoff * 2).min(BACKOFF_MAX_US);
                    if let Err(e) = self.prober.transport_mut().reopen() {
                        log::warn!("reopen failed on {}: {e}", self.prober.source());
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Ok(summary)
    }

    fn schedule_due(
        &mut self,
        now: u64,
        end: u64,
        next_ping: &mut u64,
        interval: u64,
        summary: &mut WorkerSummary,
    ) -> Result<(), ProbeError> {
        while *next_ping <= now && *next_ping < end {
            // A tick whose burst fails is not retried.
            *next_ping += interval;
            for i in 0..self.destinations.len() {
                self.prober.send_ping(self.destinations[i])?;
                summary.pings += 1;
            }
        }
        Ok(())
    }
}

fn deliver(sink: &dyn RecordSink, records: Vec<Record>) -> Result<(), ProbeError> {
    for r in records {
        sink.accept(r)?;
    }
    Ok(())
}

/// Run one worker per source address on its own thread until `end_us`.
pub fn run_workers<T, C>(
    workers: Vec<SourceWorker<T, C>>,
    end_us: u64,
    sink: &dyn RecordSink,
    stop: &AtomicBool,
) -> Vec<Result<WorkerSummary, ProbeError>>
where
    T: Transport,
    C: Clock,
{
    std::thread::scope(|s| {
        let handles: Vec<_> = workers
            .into_iter()
            .map(|mut w| s.spawn(move || w.run(end_us, sink, stop)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}
