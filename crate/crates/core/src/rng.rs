//! Seeded, splittable uniform randomness.
//!
//! Every random consumer draws from its own ChaCha8 stream, selected by a
//! [`Purpose`] tag, so adding a consumer never perturbs the draws of another.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Substream tags. Values are part of the reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Intervals = 1,
    Afterpulse = 2,
    Fuzz = 3,
}

pub fn substream(seed: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for an individual sweep point, derived from the master seed and the
/// point's grid coordinates.
pub fn derive_seed(master: u64, index: u64, replicate: u64) -> u64 {
    let a = mix64(master.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let b = mix64(a ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93));
    mix64(b ^ replicate.wrapping_mul(0xa076_1d64_78bd_642f))
}

/// Uniform in the open interval (0, 1), 53 bits of resolution.
#[inline]
pub fn open_unit<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Exponential variate with the given mean, by inverse CDF. Always > 0.
#[inline]
pub fn exponential<R: RngCore>(rng: &mut R, mean: f64) -> f64 {
    -mean * open_unit(rng).ln()
}
