//! Binary fixed-point pi by the Chudnovsky series with binary splitting.

use num_bigint::{BigInt, BigUint, Sign};

/// Absolute error bound of [`pi_fixed`], in units of `2^-bits`.
pub const PI_ERROR_ULPS: u32 = 2;

// Each series term contributes log2(640320^3 / 1728) ~ 47.11 bits.
const BITS_PER_TERM: u64 = 47;

const C3_OVER_24: u64 = 10_939_058_860_032_000;

struct Split {
    p: BigInt,
    q: BigInt,
    r: BigInt,
}

fn split(a: u64, b: u64) -> Split {
    if b == a + 1 {
        let p = -BigInt::from(6 * a - 5) * BigInt::from(2 * a - 1) * BigInt::from(6 * a - 1);
        let q = BigInt::from(C3_OVER_24) * BigInt::from(a) * BigInt::from(a) * BigInt::from(a);
        let r = &p * BigInt::from(545_140_134u64 * a + 13_591_409);
        return Split { p, q, r };
    }
    let mid = (a + b) / 2;
    let left = split(a, mid);
    let right = split(mid, b);
    Split {
        r: &right.q * &left.r + &left.p * &right.r,
        p: left.p * right.p,
        q: left.q * right.q,
    }
}

/// Returns `x` with `|x - pi * 2^bits| < PI_ERROR_ULPS`.
///
/// The truncated tail of the alternating series is below `2^-(bits + 10)`
/// relative, the square root is floored (error under 0.04 ulp once scaled),
/// and the final division is floored (under 1 ulp).
pub fn pi_fixed(bits: u64) -> BigUint {
    let terms = (bits + 10) / BITS_PER_TERM + 2;
    let Split { q, r, .. } = split(1, terms);
    let denom = BigInt::from(13_591_409u64) * &q + r;

    let radicand = BigUint::from(10_005u32) << (2 * bits);
    let root = BigInt::from_biguint(Sign::Plus, radicand.sqrt());
    let numer = BigInt::from(426_880u32) * root * q;

    let (sign, magnitude) = (numer / denom).into_parts();
    debug_assert_eq!(sign, Sign::Plus);
    magnitude
}
