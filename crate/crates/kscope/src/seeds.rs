//! Seed fan-out.
//!
//! One master seed is split into independent per-stage and per-item seeds by
//! hashing a textual label into the master with FNV-1a and finishing with the
//! SplitMix64 mixer. Every pipeline stage derives its generators this way, so
//! any stage can be re-run in isolation and parallel execution order cannot
//! change results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` for the stage named `label`.
pub fn split(master: u64, label: &str) -> u64 {
    splitmix64(master ^ fnv1a(label.as_bytes()))
}

/// Derive a child seed for the `index`-th item of the stage named `label`.
pub fn split_index(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(split(master, label) ^ splitmix64(index.wrapping_add(1)))
}

/// Deterministic generator for a derived seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
