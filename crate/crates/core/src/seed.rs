//! Deterministic seed derivation.
//!
//! Every randomized routine in this crate takes a `u64` seed and expands it
//! with ChaCha8, so results are reproducible bit-for-bit across runs and
//! platforms.  When one top-level seed has to drive many independent
//! streams (per-trial matrices, per-trial signals, grid cells) the streams
//! are derived here, never by reusing one RNG across work items: changing
//! how many draws one item makes must not disturb its neighbours.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; the standard 64-bit finalizer used to decorrelate
/// nearby seed inputs.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a list of stream labels into a fresh seed.
pub fn derive(base: u64, labels: &[u64]) -> u64 {
    let mut acc = splitmix64(base);
    for &l in labels {
        acc = splitmix64(acc ^ l.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    acc
}

/// Seeded RNG used throughout the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
