//! Seed plumbing. Every random object in the crate is a pure function of a
//! `u64` seed plus a stream index, so results do not depend on scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::SplitMix64;

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive a child seed; used to split a master seed into sub-seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut sm = SplitMix64::seed_from_u64(seed ^ tag.wrapping_mul(0xA076_1D64_78BD_642F));
    sm.next_u64() ^ sm.next_u64().rotate_left(17)
}

/// Key of child `j` of a tree vertex with key `parent`.
#[inline]
pub fn child_key(parent: u64, j: usize) -> u64 {
    SplitMix64::seed_from_u64(parent.wrapping_add((j as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
        .next_u64()
}

/// Standard normal variate attached to a key.
#[inline]
pub fn keyed_normal(key: u64) -> f64 {
    let mut sm = SplitMix64::seed_from_u64(key);
    StandardNormal.sample(&mut sm)
}

pub fn normal_vec<R: RngCore>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}
