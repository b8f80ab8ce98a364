//! Seeded random streams.
//!
//! Every random decision in the pipeline draws from a ChaCha20 stream
//! (`rand_chacha::ChaCha20Rng`), a counter-based generator whose output is
//! fully specified by its 256-bit key and 64-bit stream id. A stream is
//! derived from the top-level seed and a [`Stream`] purpose as follows:
//!
//! * key = `ChaCha20Rng::seed_from_u64(mix(seed ^ mix(purpose)))` where `mix`
//!   is the SplitMix64 finalizer,
//! * stream id = the caller's sub-index (tree index, permutation repeat, ...).
//!
//! Integer draws in `[0, n)` use the widening multiply `(u64 * n) >> 64` on a
//! single `next_u64()`, so a shuffle consumes exactly `len - 1` words.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Named sub-streams fanned out from the top-level seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Split = 1,
    Forest = 2,
    Mlp = 3,
    Importance = 4,
    Synth = 5,
    KernelSubsample = 6,
    Noise = 7,
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The generator for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Stream, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(mix(seed ^ mix(purpose as u64)));
    rng.set_stream(index);
    rng
}

/// Uniform integer in `[0, n)`; `n` must be nonzero.
pub fn below<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// Fisher-Yates shuffle, walking from the last element down.
pub fn shuffle<T, R: RngCore + ?Sized>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i + 1);
        items.swap(i, j);
    }
}

/// Uniform real in `[0, 1)` with 53 bits of precision.
pub fn unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
