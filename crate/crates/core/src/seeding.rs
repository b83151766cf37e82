//! Deterministic seed derivation.
//!
//! Every randomized stage of a run pulls its RNG stream from a named, hashed
//! derivation of the base seed, so no two stages share a stream and adding
//! draws to one stage never perturbs another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derive a child seed from a base seed, a stream name, and an index.
pub fn derive_seed(base: u64, stream: &str, index: u64) -> u64 {
    let mut z = splitmix64(base ^ fnv1a(stream.as_bytes()));
    z = splitmix64(z ^ splitmix64(index));
    z
}

/// A seeded RNG for the named stream.
pub fn stream_rng(base: u64, stream: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, index))
}
