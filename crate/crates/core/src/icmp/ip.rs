//! Minimal IPv4/IPv6 header handling: enough to build the datagrams quoted
//! inside ICMP errors, strip headers from raw-socket reads, and feed the
//! ICMPv6 pseudo-header into the checksum.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use super::checksum::{internet_checksum, sum_words};
use super::{Family, IcmpError};

pub const IPV4_HEADER_LEN: usize = 20;
pub const IPV6_HEADER_LEN: usize = 40;

const PROTO_ICMP: u8 = 1;
const NEXT_HEADER_ICMPV6: u8 = 58;

impl Family {
    pub fn header_len(self) -> usize {
        match self {
            Family::V4 => IPV4_HEADER_LEN,
            Family::V6 => IPV6_HEADER_LEN,
        }
    }
}

/// Source and destination used by the ICMPv6 checksum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PseudoHeader {
    pub source: Ipv6Addr,
    pub destination: Ipv6Addr,
}

impl PseudoHeader {
    pub fn new(source: Ipv6Addr, destination: Ipv6Addr) -> Self {
        Self {
            source,
            destination,
        }
    }

    /// Build from generic addresses; `None` unless both are IPv6.
    pub fn from_addrs(source: IpAddr, destination: IpAddr) -> Option<Self> {
        match (source, destination) {
            (IpAddr::V6(s), IpAddr::V6(d)) => Some(Self::new(s, d)),
            _ => None,
        }
    }

    /// Partial one's complement sum of the pseudo-header for an upper-layer
    /// payload of `upper_len` bytes.
    pub fn partial_sum(&self, upper_len: usize) -> u64 {
        let mut sum = sum_words(&self.source.octets(), 0);
        sum = sum_words(&self.destination.octets(), sum);
        sum = sum_words(&(upper_len as u32).to_be_bytes(), sum);
        sum + u64::from(NEXT_HEADER_ICMPV6)
    }
}

/// Prepend an IP header carrying ICMP to `icmp`.
pub fn wrap_datagram(src: IpAddr, dst: IpAddr, ttl: u8, icmp: &[u8]) -> Result<Vec<u8>, IcmpError> {
    match (src, dst) {
        (IpAddr::V4(s), IpAddr::V4(d)) => Ok(ipv4_datagram(s, d, ttl, icmp)),
        (IpAddr::V6(s), IpAddr::V6(d)) => Ok(ipv6_datagram(s, d, ttl, icmp)),
        _ => Err(IcmpError::MixedFamilies),
    }
}

fn ipv4_datagram(src: Ipv4Addr, dst: Ipv4Addr, ttl: u8, icmp: &[u8]) -> Vec<u8> {
    let total = (IPV4_HEADER_LEN + icmp.len()) as u16;
    let mut out = Vec::with_capacity(total as usize);
    out.extend_from_slice(&[0x45, 0x00]);
    out.extend_from_slice(&total.to_be_bytes());
    out.extend_from_slice(&[0, 0, 0x40, 0x00]); // id 0, DF
    out.extend_from_slice(&[ttl, PROTO_ICMP, 0, 0]);
    out.extend_from_slice(&src.octets());
    out.extend_from_slice(&dst.octets());
    let c = internet_checksum(&out);
    out[10..12].copy_from_slice(&c.to_be_bytes());
    out.extend_from_slice(icmp);
    out
}

fn ipv6_datagram(src: Ipv6Addr, dst: Ipv6Addr, hop_limit: u8, icmp: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(IPV6_HEADER_LEN + icmp.len());
    out.extend_from_slice(&[0x60, 0, 0, 0]);
    out.extend_from_slice(&(icmp.len() as u16).to_be_bytes());
    out.push(NEXT_HEADER_ICMPV6);
    out.push(hop_limit);
    out.extend_from_slice(&src.octets());
    out.extend_from_slice(&dst.octets());
    out.extend_from_slice(icmp);
    out
}

/// Header fields recovered from a (possibly truncated) quoted datagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IpHeaderInfo {
    pub source: IpAddr,
    pub destination: IpAddr,
    pub header_len: usize,
}

/// Parse the fixed IP header at the front of `data`.
pub fn parse_header(data: &[u8], family: Family) -> Result<IpHeaderInfo, IcmpError> {
    match family {
        Family::V4 => {
            if data.len() < IPV4_HEADER_LEN || data[0] >> 4 != 4 {
                return Err(IcmpError::Truncated {
                    needed: IPV4_HEADER_LEN,
                    got: data.len(),
                });
            }
            let ihl = usize::from(data[0] & 0x0F) * 4;
            if ihl < IPV4_HEADER_LEN || data.len() < ihl {
                return Err(IcmpError::Truncated {
                    needed: ihl.max(IPV4_HEADER_LEN),
                    got: data.len(),
                });
            }
            let source = Ipv4Addr::new(data[12], data[13], data[14], data[15]);
            let destination = Ipv4Addr::new(data[16], data[17], data[18], data[19]);
            Ok(IpHeaderInfo {
                source: source.into(),
                destination: destination.into(),
                header_len: ihl,
            })
        }
        Family::V6 => {
            if data.len() < IPV6_HEADER_LEN || data[0] >> 4 != 6 {
                return Err(IcmpError::Truncated {
                    needed: IPV6_HEADER_LEN,
                    got: data.len(),
                });
            }
            let mut s = [0u8; 16];
            let mut d = [0u8; 16];
            s.copy_from_slice(&data[8..24]);
            d.copy_from_slice(&data[24..40]);
            Ok(IpHeaderInfo {
                source: Ipv6Addr::from(s).into(),
                destination: Ipv6Addr::from(d).into(),
                header_len: IPV6_HEADER_LEN,
            })
        }
    }
}
