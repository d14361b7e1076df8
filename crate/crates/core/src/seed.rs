//! Hierarchical seed derivation.
//!
//! Every stochastic unit (a trace, a tree, a split) draws from its own
//! ChaCha stream keyed by a seed derived from the master seed, a stage label
//! and an index. Work can therefore be scheduled in any order or in parallel
//! without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// FNV-1a over the stage label.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derive a child seed from `(parent, label, index)`.
pub fn derive_seed(parent: u64, label: &str, index: u64) -> u64 {
    let mut h = splitmix64(parent ^ label_hash(label));
    h = splitmix64(h ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    h
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(parent: u64, label: &str, index: u64) -> ChaCha8Rng {
    rng_from_seed(derive_seed(parent, label, index))
}
