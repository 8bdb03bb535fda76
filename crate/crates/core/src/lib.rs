//! Lossless image encryption with AES-128 and a per-block bit permutation
//! drawn from the fractional bytes of `key * pi`, plus the statistics used
//! to judge how random the cipher images look.

pub mod cipher;
pub mod keystream;
pub mod pipeline;
pub mod permgen;
pub mod cli;
pub mod imageio;
pub mod randstat;
