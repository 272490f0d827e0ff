//! Seed derivation for independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes `index` into `base` with the SplitMix64 finalizer, so nearby seeds
/// and indices give unrelated streams.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(base: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, index))
}
