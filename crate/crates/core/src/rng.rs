//! Seeded random streams.
//!
//! Every stochastic component draws from its own stream derived from one
//! master seed and a fixed label, so adding draws in one component never
//! shifts the numbers another component sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed of the stream `(label, index)` under `master`.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a(label)) ^ splitmix64(index.wrapping_add(1)))
}

/// A generator for the stream `(label, index)` under `master`.
pub fn stream(master: u64, label: &str, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, label, index))
}

/// A generator seeded directly.
pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
