//! Checksum-constant payloads.
//!
//! Load balancers hash the first four bytes of the transport header. For an
//! echo request those are type, code and checksum, so keeping the checksum
//! fixed across every packet of a traceroute run pins the whole run to one
//! path. The payload carries a compensation word that absorbs whatever the
//! changing sequence number and timestamp add to the one's complement sum.
//!
//! Payload layout:
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 0..8  | send timestamp, µs, big-endian `u64`      |
//! | 8..10 | compensation word                         |
//! | 10..  | zero                                      |

use super::checksum::{fold, sum_words};
use super::ip::PseudoHeader;
use super::packet::{encode_echo, require_pseudo, EchoKind, EchoPacket};
use super::{Family, IcmpError};

/// Canonical payload: 24-byte ICMP message, 44 B on IPv4 and 64 B on IPv6.
pub const PAYLOAD_LEN: usize = 16;
/// Timestamp plus compensation word.
pub const MIN_PAYLOAD_LEN: usize = 10;

const TIMESTAMP_AT: usize = 0;
const COMPENSATION_AT: usize = 8;

fn base_payload(timestamp_us: u64, payload_len: usize) -> Result<Vec<u8>, IcmpError> {
    if payload_len < MIN_PAYLOAD_LEN {
        return Err(IcmpError::PayloadTooSmall {
            len: payload_len,
            min: MIN_PAYLOAD_LEN,
        });
    }
    let mut payload = vec![0u8; payload_len];
    payload[TIMESTAMP_AT..TIMESTAMP_AT + 8].copy_from_slice(&timestamp_us.to_be_bytes());
    Ok(payload)
}

/// Folded one's complement sum of the request with checksum and
/// compensation word zeroed. Never zero: the type byte is nonzero.
fn uncompensated_sum(
    identifier: u16,
    sequence: u16,
    payload: &[u8],
    family: Family,
    pseudo: Option<&PseudoHeader>,
) -> Result<u16, IcmpError> {
    let pseudo = require_pseudo(family, pseudo)?;
    let packet = EchoPacket::new(EchoKind::Request, identifier, sequence, payload.to_vec());
    // encode_echo writes a checksum; zero it again to get the raw sum.
    let mut bytes = encode_echo(&packet, family, pseudo)?;
    bytes[2] = 0;
    bytes[3] = 0;
    let initial = pseudo.map_or(0, |p| p.partial_sum(bytes.len()));
    Ok(fold(sum_words(&bytes, initial)))
}

/// Checksum an echo request gets with a zero compensation word.
///
/// A run takes this value from its first packet as its target.
pub fn natural_checksum(
    identifier: u16,
    sequence: u16,
    timestamp_us: u64,
    payload_len: usize,
    family: Family,
    pseudo: Option<&PseudoHeader>,
) -> Result<u16, IcmpError> {
    let payload = base_payload(timestamp_us, payload_len)?;
    Ok(!uncompensated_sum(
        identifier, sequence, &payload, family, pseudo,
    )?)
}

/// Build a payload that makes the echo request `(identifier, sequence)`
/// carry `target_checksum`.
///
/// Work modulo 0xFFFF: `fold` maps any nonzero sum to the representative of
/// its residue in `1..=0xFFFF`. With `f` the folded sum of everything but the
/// compensation word and `t = !target_checksum`, choose
/// `c = (t - f) mod 0xFFFF` in `0..0xFFFF`. Then `f + c ≡ t` and `f + c > 0`,
/// so the folded sum is exactly `t` and the checksum is `!t = target`. The
/// carry out of `f + c` is absorbed by the fold, so no carry case is special.
/// `c` is a single word, so a solution always exists, except that `t` must be
/// nonzero: the sum of a message with a nonzero byte never folds to zero, so
/// a checksum of 0xFFFF cannot be produced.
pub fn craft_payload(
    identifier: u16,
    sequence: u16,
    target_checksum: u16,
    timestamp_us: u64,
    payload_len: usize,
    family: Family,
    pseudo: Option<&PseudoHeader>,
) -> Result<Vec<u8>, IcmpError> {
    if target_checksum == 0xFFFF {
        return Err(IcmpError::UnreachableChecksum);
    }
    let mut payload = base_payload(timestamp_us, payload_len)?;
    let f = u32::from(uncompensated_sum(
        identifier, sequence, &payload, family, pseudo,
    )?);
    let t = u32::from(!target_checksum);
    let c = ((t + 0xFFFF - f) % 0xFFFF) as u16;
    payload[COMPENSATION_AT..COMPENSATION_AT + 2].copy_from_slice(&c.to_be_bytes());
    Ok(payload)
}

/// Send timestamp stored in a payload built by this module.
pub fn payload_timestamp(payload: &[u8]) -> Option<u64> {
    let bytes = payload.get(TIMESTAMP_AT..TIMESTAMP_AT + 8)?;
    Some(u64::from_be_bytes(bytes.try_into().ok()?))
}

/// Compensation word of a crafted payload.
pub fn payload_compensation(payload: &[u8]) -> Option<u16> {
    let bytes = payload.get(COMPENSATION_AT..COMPENSATION_AT + 2)?;
    Some(u16::from_be_bytes([bytes[0], bytes[1]]))
}

/// Produces the echo requests of one traceroute run.
///
/// With a target set, every packet shares one checksum; without, each packet
/// keeps its natural checksum (used to demonstrate path mixing).
#[derive(Debug, Clone)]
pub struct RunCrafter {
    family: Family,
    pseudo: Option<PseudoHeader>,
    payload_len: usize,
    target: Option<u16>,
}

impl RunCrafter {
    /// Crafter whose target is the natural checksum of the first packet.
    pub fn constant(
        family: Family,
        pseudo: Option<PseudoHeader>,
        identifier: u16,
        first_sequence: u16,
        timestamp_us: u64,
    ) -> Result<Self, IcmpError> {
        let target = natural_checksum(
            identifier,
            first_sequence,
            timestamp_us,
            PAYLOAD_LEN,
            family,
            pseudo.as_ref(),
        )?;
        Ok(Self {
            family,
            pseudo,
            payload_len: PAYLOAD_LEN,
            target: Some(target),
        })
    }

    /// Crafter that leaves checksums alone.
    pub fn uncrafted(family: Family, pseudo: Option<PseudoHeader>) -> Self {
        Self {
            family,
            pseudo,
            payload_len: PAYLOAD_LEN,
            target: None,
        }
    }

    pub fn target(&self) -> Option<u16> {
        self.target
    }

    pub fn request(
        &self,
        identifier: u16,
        sequence: u16,
        timestamp_us: u64,
    ) -> Result<Vec<u8>, IcmpError> {
        let payload = match self.target {
            Some(t) => craft_payload(
                identifier,
                sequence,
                t,
                timestamp_us,
                self.payload_len,
                self.family,
                self.pseudo.as_ref(),
            )?,
            None => base_payload(timestamp_us, self.payload_len)?,
        };
        let packet = EchoPacket::new(EchoKind::Request, identifier, sequence, payload);
        encode_echo(&packet, self.family, self.pseudo.as_ref())
    }
}
