//! Seed derivation. Every random stream in the simulator is a ChaCha8 stream
//! keyed by a base seed and a list of context words (round, client id, ...),
//! so results do not depend on call order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base` with each context word into a single 64-bit seed.
pub fn derive_seed(base: u64, context: &[u64]) -> u64 {
    context
        .iter()
        .fold(splitmix64(base), |acc, &word| splitmix64(acc ^ splitmix64(word)))
}

pub fn stream(base: u64, context: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, context))
}
