//! Counter-based random streams.
//!
//! Every pixel (and every reconstruction step) gets its own ChaCha stream,
//! addressed by `(seed, stream id)`. A stream's output depends only on that
//! address, so simulation order and thread count never change results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Concrete generator used throughout the crate.
pub type RandomSource = ChaCha8Rng;

/// Stream for an arbitrary 64-bit id under `seed`.
pub fn stream(seed: u64, id: u64) -> RandomSource {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Stream dedicated to pixel `(row, col)`.
pub fn pixel_stream(seed: u64, row: u32, col: u32) -> RandomSource {
    stream(seed, (u64::from(row) << 32) | u64::from(col))
}
