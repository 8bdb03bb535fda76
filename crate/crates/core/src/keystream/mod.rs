//! Key stream: the bytes after the binary point of `l * pi`, where `l` is
//! the AES key read as a big-endian integer.
//!
//! Block `j` of a payload draws its permutation digits from the sliding
//! window `b_j ..= b_{j+126}`, so a payload of `B` blocks needs `B + 126`
//! stream bytes.

pub mod pi;

use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;
use thiserror::Error;

use crate::permgen::WINDOW_LEN;

/// Extra fractional bits carried beyond the requested bytes and the key width.
pub const GUARD_BITS: u64 = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeystreamError {
    #[error("key must be {expected} hexadecimal digits, got {got}")]
    KeyLength { expected: &'static str, got: usize },
    #[error("key contains a non-hexadecimal character")]
    KeyHex,
    #[error("the all-zero key gives a zero multiple of pi and is rejected")]
    ZeroMultiplier,
    #[error("at least one stream byte must be requested")]
    EmptyStream,
    #[error("window {index} needs bytes up to {needed}, stream holds {available}")]
    WindowOutOfRange {
        index: usize,
        needed: usize,
        available: usize,
    },
}

/// A 128-bit AES key. Byte 0 is the most significant when read as an integer.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Key128(pub [u8; 16]);

impl Key128 {
    /// Parses exactly 32 hexadecimal digits.
    pub fn from_hex(s: &str) -> Result<Self, KeystreamError> {
        let s = s.trim();
        if s.len() != 32 {
            return Err(KeystreamError::KeyLength {
                expected: "32",
                got: s.len(),
            });
        }
        let mut bytes = [0u8; 16];
        hex::decode_to_slice(s, &mut bytes).map_err(|_| KeystreamError::KeyHex)?;
        Ok(Self(bytes))
    }

    /// Accepts 32 digits, or 31 digits which are left-padded with one zero.
    pub fn from_hex_padded(s: &str) -> Result<Self, KeystreamError> {
        let s = s.trim();
        match s.len() {
            31 => Self::from_hex(&format!("0{s}")),
            32 => Self::from_hex(s),
            got => Err(KeystreamError::KeyLength {
                expected: "31 or 32",
                got,
            }),
        }
    }

    pub fn to_hex(&self) -> String {
        hex::encode_upper(self.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&b| b == 0)
    }

    /// `k + 1 mod 2^128`.
    pub fn wrapping_increment(&self) -> Self {
        Self(u128::from_be_bytes(self.0).wrapping_add(1).to_be_bytes())
    }
}

impl fmt::Debug for Key128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Key128").field(&self.to_hex()).finish()
    }
}

/// `l = sum a_i 2^i` over the 128 key bits.
pub fn key_to_integer(k: &Key128) -> BigUint {
    BigUint::from_bytes_be(&k.0)
}

/// The first `count` bytes after the binary point of some `l * pi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FractionStream {
    bytes: Vec<u8>,
}

impl FractionStream {
    /// Wraps already materialized bytes, e.g. a fixed stream for testing.
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self { bytes }
    }

    pub fn count(&self) -> usize {
        self.bytes.len()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Bytes `b_j ..= b_{j+126}`.
    pub fn window(&self, j: usize) -> Result<&[u8], KeystreamError> {
        let end = j
            .checked_add(WINDOW_LEN)
            .filter(|&end| end <= self.bytes.len())
            .ok_or(KeystreamError::WindowOutOfRange {
                index: j,
                needed: j.saturating_add(WINDOW_LEN),
                available: self.bytes.len(),
            })?;
        Ok(&self.bytes[j..end])
    }
}

/// Stream length needed to serve `blocks` sliding windows.
pub fn required_byte_count(blocks: usize) -> usize {
    blocks + WINDOW_LEN - 1
}

/// Computes the first `count` fractional bytes of `l * pi` exactly.
///
/// Works at `8 * count + bitlen(l) + GUARD_BITS` fractional bits. The pi
/// error bound is carried through the product as an interval; if the
/// interval straddles a boundary of the last requested bit the precision is
/// widened and the product recomputed.
pub fn pi_fraction_bytes(l: &BigUint, count: usize) -> Result<FractionStream, KeystreamError> {
    if l.is_zero() {
        return Err(KeystreamError::ZeroMultiplier);
    }
    if count == 0 {
        return Err(KeystreamError::EmptyStream);
    }
    let wanted = 8 * count as u64;
    let mut guard = GUARD_BITS;
    loop {
        let precision = wanted + l.bits() + guard;
        let scaled_pi = pi::pi_fixed(precision);
        let product = l * scaled_pi;
        let slack = l * BigUint::from(pi::PI_ERROR_ULPS);
        let shift = precision - wanted;
        let low = (&product - &slack) >> shift;
        let high = (&product + &slack) >> shift;
        if low == high {
            return Ok(FractionStream {
                bytes: low_bytes(&low, count),
            });
        }
        guard *= 2;
    }
}

/// The `count` least significant bytes of `value`, big-endian.
fn low_bytes(value: &BigUint, count: usize) -> Vec<u8> {
    let be = value.to_bytes_be();
    if be.len() >= count {
        be[be.len() - count..].to_vec()
    } else {
        let mut out = vec![0u8; count - be.len()];
        out.extend_from_slice(&be);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;
    use proptest::prelude::*;

    /// Independent route: Machin's formula, pi = 16 atan(1/5) - 4 atan(1/239),
    /// at twice the working precision, with its own interval check.
    fn machin_fraction_bytes(l: &BigUint, count: usize) -> Vec<u8> {
        fn atan_inv(x: u32, bits: u64) -> (BigUint, u64) {
            let x2 = BigUint::from(x * x);
            let mut power = (BigUint::one() << bits) / BigUint::from(x);
            let mut sum_pos = BigUint::zero();
            let mut sum_neg = BigUint::zero();
            let mut k = 0u64;
            while !power.is_zero() {
                let term = &power / BigUint::from(2 * k + 1);
                if k.is_multiple_of(2) {
                    sum_pos += term;
                } else {
                    sum_neg += term;
                }
                power /= &x2;
                k += 1;
            }
            (sum_pos - sum_neg, k + 1)
        }
        let wanted = 8 * count as u64;
        let bits = 2 * (wanted + l.bits()) + 64;
        let (a5, t5) = atan_inv(5, bits);
        let (a239, t239) = atan_inv(239, bits);
        let pi = a5 * 16u32 - a239 * 4u32;
        let err = BigUint::from(16 * t5 + 4 * t239 + 4) * l;
        let product = l * pi;
        let low = (&product - &err) >> (bits - wanted);
        let high = (&product + &err) >> (bits - wanted);
        assert_eq!(low, high, "oracle precision too low");
        low_bytes(&low, count)
    }

    #[test]
    fn key_integer_examples() {
        assert_eq!(key_to_integer(&Key128([0; 16])), BigUint::zero());
        let mut one = [0u8; 16];
        one[15] = 1;
        assert_eq!(key_to_integer(&Key128(one)), BigUint::one());
        let k = Key128::from_hex("2B7E151628AED2A6ABF7158809CF4F3C").unwrap();
        assert_eq!(
            key_to_integer(&k),
            BigUint::parse_bytes(b"2B7E151628AED2A6ABF7158809CF4F3C", 16).unwrap()
        );
    }

    #[test]
    fn published_key_alignment() {
        // The key as printed has 31 digits; left-padding is the only
        // alignment that keeps it within 128 bits.
        let k = Key128::from_hex_padded("0123456789ABCDEFEDCBA9876543210").unwrap();
        assert_eq!(k.to_hex(), "00123456789ABCDEFEDCBA9876543210");
        assert_eq!(
            key_to_integer(&k).to_string(),
            "94522879700260684131410776964739600"
        );
        // The printed decimal l is the hex string ...EFFECBA..., two digits
        // away from the printed key.
        let printed_l: BigUint = "94522879700260684207971970630038032".parse().unwrap();
        assert_eq!(
            format!("{printed_l:X}"),
            "123456789ABCDEFFECBA9876543210"
        );
    }

    #[test]
    fn key_parsing_errors() {
        assert_eq!(
            Key128::from_hex("00"),
            Err(KeystreamError::KeyLength {
                expected: "32",
                got: 2
            })
        );
        assert_eq!(
            Key128::from_hex("0123456789ABCDEFEDCBA9876543210Z"),
            Err(KeystreamError::KeyHex)
        );
        assert!(Key128::from_hex_padded("0123456789ABCDEFEDCBA987654321").is_err());
    }

    #[test]
    fn increment_wraps() {
        let k = Key128([0xff; 16]);
        assert!(k.wrapping_increment().is_zero());
        let k = Key128::from_hex("000000000000000000000000000000FF").unwrap();
        assert_eq!(k.wrapping_increment().to_hex(), "00000000000000000000000000000100");
    }

    #[test]
    fn pi_hex_digits() {
        let s = pi_fraction_bytes(&BigUint::one(), 5).unwrap();
        assert_eq!(s.bytes(), &[0x24, 0x3F, 0x6A, 0x88, 0x85]);
        let s = pi_fraction_bytes(&BigUint::from(2u32), 1).unwrap();
        assert_eq!(s.bytes(), &[0x48]);
    }

    #[test]
    fn zero_multiplier_rejected() {
        assert_eq!(
            pi_fraction_bytes(&BigUint::zero(), 4),
            Err(KeystreamError::ZeroMultiplier)
        );
        assert_eq!(
            pi_fraction_bytes(&BigUint::one(), 0),
            Err(KeystreamError::EmptyStream)
        );
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let l = BigUint::from(0xDEAD_BEEFu32);
        let a = pi_fraction_bytes(&l, 300).unwrap();
        let b = pi_fraction_bytes(&l, 300).unwrap();
        assert_eq!(a, b);
        let c = pi_fraction_bytes(&l, 1000).unwrap();
        assert_eq!(a.bytes(), &c.bytes()[..300]);
    }

    #[test]
    fn agrees_with_machin_oracle() {
        let max = (BigUint::one() << 128u32) - 1u32;
        let paper: BigUint = "94522879700260684207971970630038032".parse().unwrap();
        for l in [BigUint::one(), BigUint::from(3u32), paper, max, BigUint::one() << 128u32] {
            for count in [1usize, 17, 127, 2048] {
                let got = pi_fraction_bytes(&l, count).unwrap();
                assert_eq!(got.bytes(), machin_fraction_bytes(&l, count), "l = {l}, count = {count}");
            }
        }
    }

    #[test]
    fn windows_slide_by_one() {
        let s = FractionStream::from_bytes((0..=255u8).collect());
        assert_eq!(s.window(0).unwrap(), &s.bytes()[0..127]);
        assert_eq!(s.window(1).unwrap(), &s.bytes()[1..128]);
        assert_eq!(s.window(0).unwrap()[1..], s.window(1).unwrap()[..126]);
        assert!(s.window(129).is_ok());
        assert_eq!(
            s.window(130),
            Err(KeystreamError::WindowOutOfRange {
                index: 130,
                needed: 257,
                available: 256
            })
        );
        assert!(s.window(usize::MAX).is_err());
    }

    #[test]
    fn byte_counts() {
        assert_eq!(required_byte_count(1), 127);
        assert_eq!(required_byte_count(2), 128);
        assert_eq!(required_byte_count(57_600), 57_726);
        let s = FractionStream::from_bytes(vec![0; required_byte_count(57_600)]);
        assert!(s.window(57_599).is_ok());
        assert!(s.window(57_600).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn window_indexing(len in 127usize..400, j in 0usize..300) {
            let s = FractionStream::from_bytes((0..len).map(|i| (i * 31 % 251) as u8).collect());
            match s.window(j) {
                Ok(w) => {
                    prop_assert!(j + 127 <= len);
                    for (i, &b) in w.iter().enumerate() {
                        prop_assert_eq!(b, s.bytes()[j + i]);
                    }
                }
                Err(_) => prop_assert!(j + 127 > len),
            }
        }

        #[test]
        fn random_keys_match_oracle(key in any::<u128>().prop_filter("nonzero", |k| *k != 0)) {
            let l = BigUint::from(key);
            let got = pi_fraction_bytes(&l, 64).unwrap();
            prop_assert_eq!(got.bytes(), &machin_fraction_bytes(&l, 64)[..]);
        }
    }
}
