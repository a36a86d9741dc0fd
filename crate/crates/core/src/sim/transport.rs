use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::net::IpAddr;

use crate::icmp::{
    decode_message, encode_echo, encode_time_exceeded, wrap_datagram, EchoKind, Family, IcmpError,
    IcmpMessage, PacketHashPrefix, PseudoHeader,
};
use crate::probe::{Clock, Received, Transport, TransportError, VirtualClock};

use super::network::{ForwardOutcome, SimNetwork};
use super::topology::NodeIdx;
use super::SimError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Pending {
    at: u64,
    seq: u64,
    source: IpAddr,
    bytes: Vec<u8>,
}

/// In-process transport attached to one host of a [`SimNetwork`].
///
/// Every send is forwarded immediately; the response (if any) is queued to
/// arrive after twice the one-way latency of the traversed path.
/// `receive` advances the shared virtual clock to the next arrival or to
/// the deadline, whichever comes first.
pub struct SimTransport {
    network: SimNetwork,
    clock: VirtualClock,
    local: IpAddr,
    node: NodeIdx,
    pending: BinaryHeap<Reverse<Pending>>,
    seq: u64,
}

impl SimTransport {
    pub fn new(network: SimNetwork, clock: VirtualClock, local: IpAddr) -> Result<Self, SimError> {
        let node = network
            .topology()
            .node_by_address(local)
            .ok_or(SimError::UnknownAddress(local))?;
        Ok(Self {
            network,
            clock,
            local,
            node,
            pending: BinaryHeap::new(),
            seq: 0,
        })
    }

    pub fn network(&self) -> &SimNetwork {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut SimNetwork {
        &mut self.network
    }

    fn respond(&mut self, at: u64, source: IpAddr, bytes: Vec<u8>) {
        self.seq += 1;
        self.pending.push(Reverse(Pending {
            at,
            seq: self.seq,
            source,
            bytes,
        }));
    }
}

impl Transport for SimTransport {
    fn family(&self) -> Family {
        Family::of(self.local)
    }

    fn local_address(&self) -> IpAddr {
        self.local
    }

    fn send(&mut self, message: &[u8], ttl: u8, destination: IpAddr) -> Result<(), TransportError> {
        let family = self.family();
        if Family::of(destination) != family {
            return Err(TransportError::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!("{destination} is not reachable over {}", family.label()),
            )));
        }
        let Some(dest_node) = self.network.topology().node_by_address(destination) else {
            return Ok(());
        };
        let Some(prefix) = PacketHashPrefix::of(message) else {
            return Ok(());
        };
        let now = self.clock.now_us();
        let f = self
            .network
            .forward(self.node, dest_node, ttl, prefix.value(), now);
        if !f.responds {
            return Ok(());
        }
        let arrival = now + 2 * f.one_way_us;
        match f.outcome {
            ForwardOutcome::Delivered { .. } => {
                let pseudo = PseudoHeader::from_addrs(self.local, destination);
                let Ok(decoded) = decode_message(message, family, pseudo.as_ref()) else {
                    return Ok(());
                };
                let IcmpMessage::Echo(request) = decoded.message else {
                    return Ok(());
                };
                if request.kind != EchoKind::Request {
                    return Ok(());
                }
                let back = PseudoHeader::from_addrs(destination, self.local);
                if let Ok(bytes) = encode_echo(&request.reply(), family, back.as_ref()) {
                    self.respond(arrival, destination, bytes);
                }
            }
            ForwardOutcome::TimeExceeded { router } => {
                let Some(router_addr) = self.network.topology().nodes()[router].address(family)
                else {
                    return Ok(());
                };
                let quoted = wrap_datagram(self.local, destination, 1, message).map_err(invalid)?;
                let back = PseudoHeader::from_addrs(router_addr, self.local);
                let bytes =
                    encode_time_exceeded(&quoted, family, back.as_ref()).map_err(invalid)?;
                self.respond(arrival, router_addr, bytes);
            }
            ForwardOutcome::Dropped(_) => {}
        }
        Ok(())
    }

    fn receive(&mut self, deadline_us: u64) -> Result<Option<Received>, TransportError> {
        match self.pending.peek() {
            Some(Reverse(p)) if p.at <= deadline_us => {
                let Reverse(p) = self.pending.pop().expect("peeked");
                self.clock.advance_to(p.at);
                Ok(Some(Received {
                    bytes: p.bytes,
                    source: p.source,
                    timestamp: p.at,
                }))
            }
            _ => {
                self.clock.advance_to(deadline_us);
                Ok(None)
            }
        }
    }
}

fn invalid(e: IcmpError) -> TransportError {
    TransportError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}
