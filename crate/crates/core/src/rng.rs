//! Deterministic seed derivation.
//!
//! Every random decision in the crate draws from a ChaCha8 stream whose seed
//! is derived from the experiment seed plus a context tuple (user, epoch,
//! batch, ...). Streams therefore do not depend on evaluation order or on
//! how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a base seed and a context tuple into one 64-bit seed.
pub fn mix_seed(base: u64, context: &[u64]) -> u64 {
    context
        .iter()
        .fold(splitmix64(base), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn rng_for(base: u64, context: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(base, context))
}
