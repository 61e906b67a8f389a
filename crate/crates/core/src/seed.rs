//! Deterministic seed fan-out.
//!
//! Every random stream is keyed by `(master_seed, tag, index)`, so results do
//! not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const REALIZATION_TAG: &str = "real";
pub const DISORDER_TAG: &str = "dis";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Stable 64-bit hash of `(master_seed, tag, index)`.
pub fn derive_seed(master_seed: u64, tag: &str, index: u64) -> u64 {
    let h = splitmix64(master_seed ^ fnv1a(tag.as_bytes()));
    splitmix64(h ^ splitmix64(index))
}

pub fn stream(master_seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master_seed, tag, index))
}
