//! Internet checksum (RFC 1071).
//!
//! One's complement sum of 16-bit big-endian words, used by ICMP and ICMPv6.

/// Compute the internet checksum over a byte slice.
///
/// Odd-length input is padded with a trailing zero byte.
pub fn internet_checksum(data: &[u8]) -> u16 {
    !fold(sum_words(data, 0))
}

/// Accumulate the 16-bit words of `data` onto a running sum.
///
/// The accumulator is 64 bits wide, so carries never need folding until the
/// end for any realistic buffer size.
pub fn sum_words(data: &[u8], initial: u64) -> u64 {
    let mut chunks = data.chunks_exact(2);
    let mut sum = initial;
    for word in &mut chunks {
        sum += u64::from(u16::from_be_bytes([word[0], word[1]]));
    }
    if let [last] = chunks.remainder() {
        sum += u64::from(*last) << 8;
    }
    sum
}

/// Fold a wide sum into 16 bits with end-around carry.
///
/// The result is zero only when `sum` is zero.
pub fn fold(mut sum: u64) -> u16 {
    while sum >> 16 != 0 {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    sum as u16
}

/// One's complement addition of two 16-bit words.
pub fn ones_add(a: u16, b: u16) -> u16 {
    fold(u64::from(a) + u64::from(b))
}

/// True when `data`, with its checksum field in place, sums to negative zero.
pub fn verify(data: &[u8]) -> bool {
    internet_checksum(data) == 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Byte-at-a-time reference: 32-bit accumulator, carry folded after every word.
    fn naive(data: &[u8]) -> u16 {
        let mut acc: u32 = 0;
        let mut i = 0;
        while i < data.len() {
            let hi = data[i] as u32;
            let lo = if i + 1 < data.len() {
                data[i + 1] as u32
            } else {
                0
            };
            acc += (hi << 8) | lo;
            if acc > 0xFFFF {
                acc = (acc & 0xFFFF) + 1;
            }
            i += 2;
        }
        !(acc as u16)
    }

    #[test]
    fn empty_input_is_all_ones() {
        assert_eq!(internet_checksum(&[]), 0xFFFF);
    }

    #[test]
    fn two_words_without_carry() {
        assert_eq!(internet_checksum(&[0x00, 0x01, 0x00, 0x02]), 0xFFFC);
    }

    #[test]
    fn odd_length_pads_with_zero() {
        assert_eq!(internet_checksum(&[0x12]), internet_checksum(&[0x12, 0x00]));
    }

    #[test]
    fn rfc1071_worked_example() {
        // RFC 1071 section 3: words 0001 f203 f4f5 f6f7 sum to ddf2.
        let data = [0x00, 0x01, 0xf2, 0x03, 0xf4, 0xf5, 0xf6, 0xf7];
        assert_eq!(fold(sum_words(&data, 0)), 0xddf2);
        assert_eq!(internet_checksum(&data), !0xddf2);
    }

    #[test]
    fn matches_naive_reference_on_random_buffers() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let len = rng.random_range(0..=2048);
            let buf: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            assert_eq!(internet_checksum(&buf), naive(&buf), "len {len}");
        }
    }

    #[test]
    fn stored_checksum_verifies() {
        let mut msg = vec![8, 0, 0, 0, 0x12, 0x34, 0x00, 0x07, 1, 2, 3];
        let c = internet_checksum(&msg);
        msg[2..4].copy_from_slice(&c.to_be_bytes());
        assert!(verify(&msg));
    }

    #[test]
    fn ones_add_wraps_carry() {
        assert_eq!(ones_add(0xFFFF, 0x0001), 0x0001);
        assert_eq!(ones_add(0x8000, 0x8000), 0x0001);
        assert_eq!(ones_add(0x1234, 0), 0x1234);
    }
}
