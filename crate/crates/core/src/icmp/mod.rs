//! ICMP/ICMPv6 echo codec and checksum-constant payload crafting.

mod checksum;
mod craft;
mod ip;
mod packet;

use std::net::IpAddr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checksum::{fold, internet_checksum, ones_add, sum_words, verify};
pub use craft::{
    craft_payload, natural_checksum, payload_compensation, payload_timestamp, RunCrafter,
    MIN_PAYLOAD_LEN, PAYLOAD_LEN,
};
pub use ip::{
    parse_header, wrap_datagram, IpHeaderInfo, PseudoHeader, IPV4_HEADER_LEN, IPV6_HEADER_LEN,
};
pub use packet::{
    decode_message, encode_echo, encode_time_exceeded, ChecksumStatus, Decoded, EchoKind,
    EchoPacket, IcmpMessage, PacketHashPrefix, QuotedEcho, ICMP_HEADER_LEN,
};

/// IP protocol family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    V4,
    V6,
}

impl Family {
    pub fn of(addr: IpAddr) -> Self {
        match addr {
            IpAddr::V4(_) => Family::V4,
            IpAddr::V6(_) => Family::V6,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Family::V4 => "IPv4",
            Family::V6 => "IPv6",
        }
    }
}

#[derive(Debug, Error)]
pub enum IcmpError {
    #[error("message truncated: need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("ICMPv6 checksum needs source and destination addresses")]
    MissingPseudoHeader,
    #[error("payload of {len} bytes cannot hold timestamp and compensation word (min {min})")]
    PayloadTooSmall { len: usize, min: usize },
    #[error("checksum 0xFFFF cannot be produced by a message with nonzero content")]
    UnreachableChecksum,
    #[error("source and destination belong to different IP families")]
    MixedFamilies,
}
