//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream seeded with a
//! 64-bit integer. Independent consumers (graph, costs, initial points) use
//! [`derive_seed`] so that changing one does not shift the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Label for the cost-generation stream.
pub const COSTS_LABEL: u64 = 0xC057;
/// Label for random initial points.
pub const INIT_LABEL: u64 = 0x1417;

/// SplitMix64 finalizer applied to `seed ^ label`.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = (seed ^ label.rotate_left(32)).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
