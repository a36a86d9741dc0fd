use std::net::IpAddr;

use super::checksum::{fold, internet_checksum, sum_words};
use super::ip::{parse_header, PseudoHeader};
use super::{Family, IcmpError};

/// Length of the ICMP header shared by echo and error messages.
pub const ICMP_HEADER_LEN: usize = 8;

pub const ICMP_ECHO_REPLY: u8 = 0;
pub const ICMP_ECHO_REQUEST: u8 = 8;
pub const ICMP_TIME_EXCEEDED: u8 = 11;

pub const ICMPV6_TIME_EXCEEDED: u8 = 3;
pub const ICMPV6_ECHO_REQUEST: u8 = 128;
pub const ICMPV6_ECHO_REPLY: u8 = 129;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EchoKind {
    Request,
    Reply,
}

impl EchoKind {
    pub fn icmp_type(self, family: Family) -> u8 {
        match (self, family) {
            (EchoKind::Request, Family::V4) => ICMP_ECHO_REQUEST,
            (EchoKind::Reply, Family::V4) => ICMP_ECHO_REPLY,
            (EchoKind::Request, Family::V6) => ICMPV6_ECHO_REQUEST,
            (EchoKind::Reply, Family::V6) => ICMPV6_ECHO_REPLY,
        }
    }

    fn from_type(icmp_type: u8, family: Family) -> Option<Self> {
        match (icmp_type, family) {
            (ICMP_ECHO_REQUEST, Family::V4) | (ICMPV6_ECHO_REQUEST, Family::V6) => {
                Some(EchoKind::Request)
            }
            (ICMP_ECHO_REPLY, Family::V4) | (ICMPV6_ECHO_REPLY, Family::V6) => {
                Some(EchoKind::Reply)
            }
            _ => None,
        }
    }
}

/// An ICMP/ICMPv6 echo message. The code is always 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EchoPacket {
    pub kind: EchoKind,
    pub identifier: u16,
    pub sequence: u16,
    pub checksum: u16,
    pub payload: Vec<u8>,
}

impl EchoPacket {
    /// A packet whose checksum field has not been computed yet.
    pub fn new(kind: EchoKind, identifier: u16, sequence: u16, payload: Vec<u8>) -> Self {
        Self {
            kind,
            identifier,
            sequence,
            checksum: 0,
            payload,
        }
    }

    pub fn icmp_type(&self, family: Family) -> u8 {
        self.kind.icmp_type(family)
    }

    pub fn icmp_code(&self) -> u8 {
        0
    }

    pub fn len(&self) -> usize {
        ICMP_HEADER_LEN + self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Same packet with the checksum field set to the value `encode_echo` would write.
    pub fn sealed(
        mut self,
        family: Family,
        pseudo: Option<&PseudoHeader>,
    ) -> Result<Self, IcmpError> {
        let bytes = encode_echo(&self, family, pseudo)?;
        self.checksum = u16::from_be_bytes([bytes[2], bytes[3]]);
        Ok(self)
    }

    /// The reply a destination sends for this request.
    pub fn reply(&self) -> Self {
        Self {
            kind: EchoKind::Reply,
            checksum: 0,
            ..self.clone()
        }
    }
}

/// First 4 bytes of the transport header: type, code, checksum.
///
/// This is what per-flow load balancers hash for ICMP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PacketHashPrefix(pub [u8; 4]);

impl PacketHashPrefix {
    pub fn of(message: &[u8]) -> Option<Self> {
        message.get(..4).map(|b| Self([b[0], b[1], b[2], b[3]]))
    }

    /// Big-endian integer value of the prefix.
    pub fn value(self) -> u32 {
        u32::from_be_bytes(self.0)
    }
}

pub(crate) fn require_pseudo(
    family: Family,
    pseudo: Option<&PseudoHeader>,
) -> Result<Option<&PseudoHeader>, IcmpError> {
    match (family, pseudo) {
        (Family::V6, None) => Err(IcmpError::MissingPseudoHeader),
        (Family::V4, _) => Ok(None),
        (Family::V6, p) => Ok(p),
    }
}

/// Checksum of a serialized message whose checksum field is zero.
pub(crate) fn message_checksum(message: &[u8], pseudo: Option<&PseudoHeader>) -> u16 {
    match pseudo {
        None => internet_checksum(message),
        Some(p) => !fold(sum_words(message, p.partial_sum(message.len()))),
    }
}

/// Serialize an echo packet, computing its checksum.
pub fn encode_echo(
    packet: &EchoPacket,
    family: Family,
    pseudo: Option<&PseudoHeader>,
) -> Result<Vec<u8>, IcmpError> {
    let pseudo = require_pseudo(family, pseudo)?;
    let mut out = Vec::with_capacity(packet.len());
    out.push(packet.icmp_type(family));
    out.push(0);
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&packet.identifier.to_be_bytes());
    out.extend_from_slice(&packet.sequence.to_be_bytes());
    out.extend_from_slice(&packet.payload);
    let c = message_checksum(&out, pseudo);
    out[2..4].copy_from_slice(&c.to_be_bytes());
    Ok(out)
}

/// Serialize a Time Exceeded error quoting `quoted_datagram`
/// (IP header plus the start of the expired packet).
pub fn encode_time_exceeded(
    quoted_datagram: &[u8],
    family: Family,
    pseudo: Option<&PseudoHeader>,
) -> Result<Vec<u8>, IcmpError> {
    let pseudo = require_pseudo(family, pseudo)?;
    let icmp_type = match family {
        Family::V4 => ICMP_TIME_EXCEEDED,
        Family::V6 => ICMPV6_TIME_EXCEEDED,
    };
    let mut out = Vec::with_capacity(ICMP_HEADER_LEN + quoted_datagram.len());
    out.extend_from_slice(&[icmp_type, 0, 0, 0, 0, 0, 0, 0]);
    out.extend_from_slice(quoted_datagram);
    let c = message_checksum(&out, pseudo);
    out[2..4].copy_from_slice(&c.to_be_bytes());
    Ok(out)
}

/// The echo request recovered from the datagram quoted in a Time Exceeded error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuotedEcho {
    pub original_source: IpAddr,
    pub original_destination: IpAddr,
    pub identifier: u16,
    pub sequence: u16,
    pub prefix: PacketHashPrefix,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IcmpMessage {
    Echo(EchoPacket),
    TimeExceeded { code: u8, quoted: QuotedEcho },
    Other { icmp_type: u8, icmp_code: u8 },
}

impl IcmpMessage {
    /// Key used to match a response to the request that caused it.
    pub fn match_key(&self) -> Option<(u16, u16)> {
        match self {
            IcmpMessage::Echo(p) if p.kind == EchoKind::Reply => Some((p.identifier, p.sequence)),
            IcmpMessage::TimeExceeded { quoted, .. } => Some((quoted.identifier, quoted.sequence)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChecksumStatus {
    Valid,
    /// Kept rather than discarded: middleboxes rewrite packets.
    Mismatch,
    /// ICMPv6 decoded without a pseudo-header.
    Unverified,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub message: IcmpMessage,
    pub checksum: ChecksumStatus,
}

/// Parse an ICMP/ICMPv6 message (without its IP header).
pub fn decode_message(
    data: &[u8],
    family: Family,
    pseudo: Option<&PseudoHeader>,
) -> Result<Decoded, IcmpError> {
    if data.len() < ICMP_HEADER_LEN {
        return Err(IcmpError::Truncated {
            needed: ICMP_HEADER_LEN,
            got: data.len(),
        });
    }
    let checksum = match (family, pseudo) {
        (Family::V6, None) => ChecksumStatus::Unverified,
        (_, p) => {
            let ok = match p {
                Some(p) if family == Family::V6 => {
                    fold(sum_words(data, p.partial_sum(data.len()))) == 0xFFFF
                }
                _ => internet_checksum(data) == 0,
            };
            if ok {
                ChecksumStatus::Valid
            } else {
                ChecksumStatus::Mismatch
            }
        }
    };
    let (icmp_type, icmp_code) = (data[0], data[1]);
    let word = |i: usize| u16::from_be_bytes([data[i], data[i + 1]]);

    if let Some(kind) = EchoKind::from_type(icmp_type, family) {
        let packet = EchoPacket {
            kind,
            identifier: word(4),
            sequence: word(6),
            checksum: word(2),
            payload: data[ICMP_HEADER_LEN..].to_vec(),
        };
        return Ok(Decoded {
            message: IcmpMessage::Echo(packet),
            checksum,
        });
    }

    let is_time_exceeded = matches!(
        (icmp_type, family),
        (ICMP_TIME_EXCEEDED, Family::V4) | (ICMPV6_TIME_EXCEEDED, Family::V6)
    );
    if !is_time_exceeded {
        return Ok(Decoded {
            message: IcmpMessage::Other {
                icmp_type,
                icmp_code,
            },
            checksum,
        });
    }

    let inner = &data[ICMP_HEADER_LEN..];
    let header = parse_header(inner, family)?;
    let quoted_icmp = &inner[header.header_len..];
    if quoted_icmp.len() < ICMP_HEADER_LEN {
        return Err(IcmpError::Truncated {
            needed: ICMP_HEADER_LEN + header.header_len + ICMP_HEADER_LEN,
            got: data.len(),
        });
    }
    if EchoKind::from_type(quoted_icmp[0], family) != Some(EchoKind::Request) {
        return Ok(Decoded {
            message: IcmpMessage::Other {
                icmp_type,
                icmp_code,
            },
            checksum,
        });
    }
    let quoted = QuotedEcho {
        original_source: header.source,
        original_destination: header.destination,
        identifier: u16::from_be_bytes([quoted_icmp[4], quoted_icmp[5]]),
        sequence: u16::from_be_bytes([quoted_icmp[6], quoted_icmp[7]]),
        prefix: PacketHashPrefix([
            quoted_icmp[0],
            quoted_icmp[1],
            quoted_icmp[2],
            quoted_icmp[3],
        ]),
    };
    Ok(Decoded {
        message: IcmpMessage::TimeExceeded {
            code: icmp_code,
            quoted,
        },
        checksum,
    })
}
