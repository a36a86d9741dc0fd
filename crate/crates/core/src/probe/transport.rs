use std::io;
use std::net::IpAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::icmp::Family;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("raw ICMP sockets need elevated privileges: {0}")]
    PermissionDenied(io::Error),
    #[error("socket error: {0}")]
    Io(#[from] io::Error),
    #[error("transport closed")]
    Closed,
}

/// An ICMP message read from the network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Received {
    /// ICMP message without its IP header.
    pub bytes: Vec<u8>,
    pub source: IpAddr,
    /// Arrival time, µs since the epoch, on the same clock the prober reads.
    pub timestamp: u64,
}

/// Packet I/O for one source address.
pub trait Transport: Send {
    fn family(&self) -> Family;

    fn local_address(&self) -> IpAddr;

    /// Send an ICMP message with the given TTL / hop limit.
    fn send(&mut self, message: &[u8], ttl: u8, destination: IpAddr) -> Result<(), TransportError>;

    /// Block until a message arrives or `deadline_us` passes (`Ok(None)`).
    fn receive(&mut self, deadline_us: u64) -> Result<Option<Received>, TransportError>;

    /// Re-establish the transport after a failure.
    fn reopen(&mut self) -> Result<(), TransportError> {
        Ok(())
    }
}

/// Monotone time source in µs since the Unix epoch.
pub trait Clock: Send {
    fn now_us(&self) -> u64;

    fn sleep_until(&self, deadline_us: u64);
}

/// Wall clock anchored at construction and advanced by a monotonic timer,
/// so readings never go backwards.
#[derive(Debug, Clone)]
pub struct SystemClock {
    epoch_at_start: u64,
    start: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        let epoch_at_start = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_micros() as u64)
            .unwrap_or(0);
        Self {
            epoch_at_start,
            start: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_us(&self) -> u64 {
        self.epoch_at_start + self.start.elapsed().as_micros() as u64
    }

    fn sleep_until(&self, deadline_us: u64) {
        let now = self.now_us();
        if deadline_us > now {
            std::thread::sleep(std::time::Duration::from_micros(deadline_us - now));
        }
    }
}

/// Shared virtual time. Clones observe the same instant.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock(Arc<AtomicU64>);

impl VirtualClock {
    pub fn starting_at(us: u64) -> Self {
        Self(Arc::new(AtomicU64::new(us)))
    }

    /// Move time forward to `us`; never moves it back.
    pub fn advance_to(&self, us: u64) {
        self.0.fetch_max(us, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now_us(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    fn sleep_until(&self, deadline_us: u64) {
        self.advance_to(deadline_us);
    }
}
