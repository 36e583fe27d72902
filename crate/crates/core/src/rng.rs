//! Deterministic random streams derived from a master seed.
//!
//! Every consumer of randomness (initial design, observation noise,
//! max-value sampling, acquisition probes, ...) gets its own stream keyed by
//! a purpose tag and a few integer coordinates, so changing one consumer
//! never shifts the random numbers seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a purpose tag and coordinates into a new seed.
pub fn derive_seed(seed: u64, tag: &str, coords: &[u64]) -> u64 {
    let mut h = splitmix(seed);
    for b in tag.bytes() {
        h = splitmix(h ^ b as u64);
    }
    for &c in coords {
        h = splitmix(h ^ c);
    }
    h
}

pub fn stream(seed: u64, tag: &str, coords: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, coords))
}

pub fn from_seed(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
