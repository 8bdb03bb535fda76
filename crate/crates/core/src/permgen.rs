//! Factorial-number-system permutations.
//!
//! An integer `n < m!` is written in mixed radix as
//! `n = C_0 (m-1)! + C_1 (m-2)! + ... + C_{m-1} 0!` with `0 <= C_i < m - i`.
//! The digit string selects a permutation of `0..m` by repeatedly taking
//! the element at slot `C_i` of a shrinking array and filling the hole with
//! the array's current last element, so each step costs one removal and one
//! replacement.
//!
//! The cipher only ever uses `m = 128`, with digits read off a 127-byte
//! window of the key stream (see [`coefficients_from_bytes`]).

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

/// Number of bit positions in a cipher block.
pub const BLOCK_BITS: usize = 128;

/// Bytes of key stream consumed per block permutation.
pub const WINDOW_LEN: usize = BLOCK_BITS - 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PermError {
    #[error("permutation size must be at least 2, got {0}")]
    SizeTooSmall(usize),
    #[error("integer is out of range for m = {m} (must be below m!)")]
    OutOfRange { m: usize },
    #[error("coefficient C_{index} = {value} violates 0 <= C_i < {bound}")]
    CoefficientBound { index: usize, value: usize, bound: usize },
    #[error("coefficient window must hold {expected} bytes, got {got}")]
    WindowLength { expected: usize, got: usize },
    #[error("mapping is not a rearrangement of 0..{m}")]
    NotAPermutation { m: usize },
    #[error("bit permutation needs m = {BLOCK_BITS}, got {0}")]
    WrongBlockSize(usize),
}

/// Mixed-radix digits `C_0..C_{m-1}` of an integer below `m!`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FactoradicCoefficients {
    coeffs: Vec<usize>,
}

impl FactoradicCoefficients {
    /// Validates the digit bounds; the last digit is forced to zero by them.
    pub fn new(coeffs: Vec<usize>) -> Result<Self, PermError> {
        let m = coeffs.len();
        if m < 2 {
            return Err(PermError::SizeTooSmall(m));
        }
        for (index, &value) in coeffs.iter().enumerate() {
            let bound = m - index;
            if value >= bound {
                return Err(PermError::CoefficientBound {
                    index,
                    value,
                    bound,
                });
            }
        }
        Ok(Self { coeffs })
    }

    pub fn m(&self) -> usize {
        self.coeffs.len()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.coeffs
    }
}

fn factorial(k: usize) -> BigUint {
    (1..=k).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

/// Writes `n` in the factorial number system with `m` digits.
pub fn factoradic_decompose(n: &BigUint, m: usize) -> Result<FactoradicCoefficients, PermError> {
    if m < 2 {
        return Err(PermError::SizeTooSmall(m));
    }
    if *n >= factorial(m) {
        return Err(PermError::OutOfRange { m });
    }
    // Least significant digit first: divide by 1, 2, ..., m.
    let mut rest = n.clone();
    let mut digits = vec![0usize; m];
    for radix in 1..=m {
        let (q, r) = rest.div_rem(&BigUint::from(radix));
        digits[m - radix] = r.to_usize().expect("remainder below radix");
        rest = q;
    }
    debug_assert!(rest.is_zero());
    FactoradicCoefficients::new(digits)
}

/// Evaluates `sum C_i (m-1-i)!` by Horner's rule over the mixed radix.
pub fn factoradic_compose(c: &FactoradicCoefficients) -> BigUint {
    let m = c.m();
    c.coeffs
        .iter()
        .enumerate()
        .fold(BigUint::zero(), |acc, (i, &digit)| {
            acc * BigUint::from(m - i) + BigUint::from(digit)
        })
}

/// `C_i = window[i] mod (128 - i)` for `i < 127`, and `C_127 = 0`.
pub fn coefficients_from_bytes(window: &[u8]) -> Result<FactoradicCoefficients, PermError> {
    if window.len() != WINDOW_LEN {
        return Err(PermError::WindowLength {
            expected: WINDOW_LEN,
            got: window.len(),
        });
    }
    let mut coeffs = Vec::with_capacity(BLOCK_BITS);
    coeffs.extend(
        window
            .iter()
            .enumerate()
            .map(|(i, &b)| b as usize % (BLOCK_BITS - i)),
    );
    coeffs.push(0);
    Ok(FactoradicCoefficients { coeffs })
}

/// A rearrangement of `0..m`. `mapping[i]` is the source position whose
/// content lands in output slot `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self, PermError> {
        let m = mapping.len();
        let mut seen = vec![false; m];
        for &src in &mapping {
            if src >= m || std::mem::replace(&mut seen[src], true) {
                return Err(PermError::NotAPermutation { m });
            }
        }
        Ok(Self { mapping })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            mapping: (0..m).collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.mapping.len()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    /// Runs the selection procedure on the digits of `c`.
    pub fn from_coefficients(c: &FactoradicCoefficients) -> Self {
        select(c.as_slice(), &mut 0)
    }

    pub fn invert(&self) -> Self {
        let mut inverse = vec![0; self.m()];
        for (slot, &src) in self.mapping.iter().enumerate() {
            inverse[src] = slot;
        }
        Self { mapping: inverse }
    }

    /// Applies the permutation to arbitrary items: `out[i] = items[mapping[i]]`.
    pub fn apply<T: Copy>(&self, items: &[T]) -> Vec<T> {
        assert_eq!(items.len(), self.m(), "length must match permutation size");
        self.mapping.iter().map(|&src| items[src]).collect()
    }

    /// Permutes the 128 bits of a block. Bit 0 is the most significant bit
    /// of byte 0 and bit 127 the least significant bit of byte 15.
    pub fn apply_to_bits(&self, block: &[u8; 16]) -> Result<[u8; 16], PermError> {
        if self.m() != BLOCK_BITS {
            return Err(PermError::WrongBlockSize(self.m()));
        }
        let input = u128::from_be_bytes(*block);
        let mut out = 0u128;
        for &src in &self.mapping {
            out = (out << 1) | ((input >> (127 - src)) & 1);
        }
        Ok(out.to_be_bytes())
    }
}

/// See [`Permutation::from_coefficients`].
pub fn permutation_from_coefficients(c: &FactoradicCoefficients) -> Permutation {
    Permutation::from_coefficients(c)
}

/// The selection walk. `moves` counts element reads and writes on the
/// working array.
pub(crate) fn select(coeffs: &[usize], moves: &mut usize) -> Permutation {
    let m = coeffs.len();
    let mut pool: Vec<usize> = (0..m).collect();
    let mut mapping = Vec::with_capacity(m);
    let mut len = m;
    for &c in coeffs {
        // Taking the last slot is a self-replacement.
        mapping.push(pool[c]);
        len -= 1;
        pool[c] = pool[len];
        *moves += 2;
    }
    Permutation { mapping }
}
