//! AES-128 with a per-block bit permutation after the initial AddRoundKey.
//!
//! The state is kept as 16 bytes in input order, so byte `r + 4c` is row
//! `r`, column `c` of the FIPS-197 state. Block `j` of a payload is
//! permuted with the permutation built from key-stream window `j`; blocks
//! are otherwise independent.

use rayon::prelude::*;
use thiserror::Error;

use crate::keystream::{
    key_to_integer, pi_fraction_bytes, required_byte_count, FractionStream, Key128, KeystreamError,
};
use crate::permgen::{coefficients_from_bytes, PermError, Permutation};

pub const BLOCK_LEN: usize = 16;
const ROUNDS: usize = 10;

pub type Block128 = [u8; BLOCK_LEN];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CipherError {
    #[error("payload length {0} is not a multiple of 16")]
    Unaligned(usize),
    #[error(transparent)]
    Keystream(#[from] KeystreamError),
    #[error(transparent)]
    Permutation(#[from] PermError),
}

const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

const INV_SBOX: [u8; 256] = {
    let mut inv = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        inv[SBOX[i] as usize] = i as u8;
        i += 1;
    }
    inv
};

const RCON: [u8; ROUNDS] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36];

#[inline]
fn xtime(b: u8) -> u8 {
    (b << 1) ^ (((b >> 7) & 1) * 0x1b)
}

#[inline]
fn gmul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        a = xtime(a);
        b >>= 1;
    }
    p
}

/// The whitening key followed by the ten round keys.
#[derive(Clone, PartialEq, Eq)]
pub struct RoundKeys([Block128; ROUNDS + 1]);

impl RoundKeys {
    pub fn get(&self, round: usize) -> &Block128 {
        &self.0[round]
    }
}

impl std::fmt::Debug for RoundKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("RoundKeys(..)")
    }
}

pub fn expand_key(k: &Key128) -> RoundKeys {
    let mut words = [[0u8; 4]; 4 * (ROUNDS + 1)];
    for (i, word) in words.iter_mut().take(4).enumerate() {
        word.copy_from_slice(&k.0[4 * i..4 * i + 4]);
    }
    for i in 4..words.len() {
        let mut temp = words[i - 1];
        if i % 4 == 0 {
            temp.rotate_left(1);
            for b in temp.iter_mut() {
                *b = SBOX[*b as usize];
            }
            temp[0] ^= RCON[i / 4 - 1];
        }
        for (t, prev) in temp.iter_mut().zip(words[i - 4]) {
            *t ^= prev;
        }
        words[i] = temp;
    }
    let mut keys = [[0u8; BLOCK_LEN]; ROUNDS + 1];
    for (round, key) in keys.iter_mut().enumerate() {
        for col in 0..4 {
            key[4 * col..4 * col + 4].copy_from_slice(&words[4 * round + col]);
        }
    }
    RoundKeys(keys)
}

#[inline]
fn add_round_key(state: &mut Block128, key: &Block128) {
    for (s, k) in state.iter_mut().zip(key) {
        *s ^= k;
    }
}

#[inline]
fn sub_bytes(state: &mut Block128) {
    for b in state.iter_mut() {
        *b = SBOX[*b as usize];
    }
}

#[inline]
fn inv_sub_bytes(state: &mut Block128) {
    for b in state.iter_mut() {
        *b = INV_SBOX[*b as usize];
    }
}

#[inline]
fn shift_rows(state: &mut Block128) {
    let old = *state;
    for row in 1..4 {
        for col in 0..4 {
            state[row + 4 * col] = old[row + 4 * ((col + row) % 4)];
        }
    }
}

#[inline]
fn inv_shift_rows(state: &mut Block128) {
    let old = *state;
    for row in 1..4 {
        for col in 0..4 {
            state[row + 4 * ((col + row) % 4)] = old[row + 4 * col];
        }
    }
}

#[inline]
fn mix_columns(state: &mut Block128) {
    for col in state.chunks_exact_mut(4) {
        let [a0, a1, a2, a3] = [col[0], col[1], col[2], col[3]];
        let all = a0 ^ a1 ^ a2 ^ a3;
        col[0] ^= all ^ xtime(a0 ^ a1);
        col[1] ^= all ^ xtime(a1 ^ a2);
        col[2] ^= all ^ xtime(a2 ^ a3);
        col[3] ^= all ^ xtime(a3 ^ a0);
    }
}

#[inline]
fn inv_mix_columns(state: &mut Block128) {
    for col in state.chunks_exact_mut(4) {
        let a = [col[0], col[1], col[2], col[3]];
        for (row, out) in col.iter_mut().enumerate() {
            *out = gmul(a[row], 0x0e)
                ^ gmul(a[(row + 1) % 4], 0x0b)
                ^ gmul(a[(row + 2) % 4], 0x0d)
                ^ gmul(a[(row + 3) % 4], 0x09);
        }
    }
}

/// Whitening, bit permutation, then the ten standard rounds.
pub fn encrypt_block(b: &Block128, p: &Permutation, rk: &RoundKeys) -> Result<Block128, PermError> {
    let mut state = *b;
    add_round_key(&mut state, rk.get(0));
    state = p.apply_to_bits(&state)?;
    for round in 1..ROUNDS {
        sub_bytes(&mut state);
        shift_rows(&mut state);
        mix_columns(&mut state);
        add_round_key(&mut state, rk.get(round));
    }
    sub_bytes(&mut state);
    shift_rows(&mut state);
    add_round_key(&mut state, rk.get(ROUNDS));
    Ok(state)
}

pub fn decrypt_block(c: &Block128, p: &Permutation, rk: &RoundKeys) -> Result<Block128, PermError> {
    let mut state = *c;
    add_round_key(&mut state, rk.get(ROUNDS));
    inv_shift_rows(&mut state);
    inv_sub_bytes(&mut state);
    for round in (1..ROUNDS).rev() {
        add_round_key(&mut state, rk.get(round));
        inv_mix_columns(&mut state);
        inv_shift_rows(&mut state);
        inv_sub_bytes(&mut state);
    }
    state = p.invert().apply_to_bits(&state)?;
    add_round_key(&mut state, rk.get(0));
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Encrypt,
    Decrypt,
}

/// Round keys plus the key stream sized for a payload.
#[derive(Debug, Clone)]
pub struct PayloadCipher {
    round_keys: RoundKeys,
    stream: FractionStream,
}

impl PayloadCipher {
    /// Expands the key and materializes enough stream for `blocks` blocks.
    pub fn new(key: &Key128, blocks: usize) -> Result<Self, CipherError> {
        let stream = pi_fraction_bytes(&key_to_integer(key), required_byte_count(blocks.max(1)))?;
        Ok(Self::from_parts(expand_key(key), stream))
    }

    pub fn from_parts(round_keys: RoundKeys, stream: FractionStream) -> Self {
        Self { round_keys, stream }
    }

    pub fn stream(&self) -> &FractionStream {
        &self.stream
    }

    pub fn round_keys(&self) -> &RoundKeys {
        &self.round_keys
    }

    /// The permutation tweak of block `j`.
    pub fn permutation(&self, j: usize) -> Result<Permutation, CipherError> {
        let window = self.stream.window(j)?;
        Ok(Permutation::from_coefficients(&coefficients_from_bytes(window)?))
    }

    /// Encrypts in place. `threads == 1` runs on the calling thread, `0` uses
    /// the global rayon pool, anything else a dedicated pool of that size.
    pub fn encrypt_in_place(&self, data: &mut [u8], threads: usize) -> Result<(), CipherError> {
        self.run(data, threads, Direction::Encrypt)
    }

    pub fn decrypt_in_place(&self, data: &mut [u8], threads: usize) -> Result<(), CipherError> {
        self.run(data, threads, Direction::Decrypt)
    }

    fn process(&self, j: usize, chunk: &mut [u8], dir: Direction) -> Result<(), CipherError> {
        let p = self.permutation(j)?;
        let block: Block128 = chunk.try_into().expect("16-byte chunk");
        let out = match dir {
            Direction::Encrypt => encrypt_block(&block, &p, &self.round_keys)?,
            Direction::Decrypt => decrypt_block(&block, &p, &self.round_keys)?,
        };
        chunk.copy_from_slice(&out);
        Ok(())
    }

    fn run(&self, data: &mut [u8], threads: usize, dir: Direction) -> Result<(), CipherError> {
        if !data.len().is_multiple_of(BLOCK_LEN) {
            return Err(CipherError::Unaligned(data.len()));
        }
        match threads {
            1 => data
                .chunks_exact_mut(BLOCK_LEN)
                .enumerate()
                .try_for_each(|(j, chunk)| self.process(j, chunk, dir)),
            0 => self.run_parallel(data, dir),
            n => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("thread pool")
                .install(|| self.run_parallel(data, dir)),
        }
    }

    fn run_parallel(&self, data: &mut [u8], dir: Direction) -> Result<(), CipherError> {
        data.par_chunks_exact_mut(BLOCK_LEN)
            .enumerate()
            .try_for_each(|(j, chunk)| self.process(j, chunk, dir))
    }
}

fn blocks_of(data: &[u8]) -> Result<usize, CipherError> {
    if !data.len().is_multiple_of(BLOCK_LEN) {
        return Err(CipherError::Unaligned(data.len()));
    }
    Ok(data.len() / BLOCK_LEN)
}

/// Encrypts a padded payload block by block, each with its own permutation.
pub fn encrypt_payload(data: &[u8], k: &Key128) -> Result<Vec<u8>, CipherError> {
    encrypt_payload_with_threads(data, k, 0)
}

pub fn decrypt_payload(data: &[u8], k: &Key128) -> Result<Vec<u8>, CipherError> {
    decrypt_payload_with_threads(data, k, 0)
}

pub fn encrypt_payload_with_threads(
    data: &[u8],
    k: &Key128,
    threads: usize,
) -> Result<Vec<u8>, CipherError> {
    let blocks = blocks_of(data)?;
    let mut out = data.to_vec();
    PayloadCipher::new(k, blocks)?.encrypt_in_place(&mut out, threads)?;
    Ok(out)
}

pub fn decrypt_payload_with_threads(
    data: &[u8],
    k: &Key128,
    threads: usize,
) -> Result<Vec<u8>, CipherError> {
    let blocks = blocks_of(data)?;
    let mut out = data.to_vec();
    PayloadCipher::new(k, blocks)?.decrypt_in_place(&mut out, threads)?;
    Ok(out)
}
