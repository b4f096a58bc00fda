//! Hierarchical, counter-based random streams.
//!
//! Keys are derived as master seed -> trial -> layer, and each layer key
//! seeds a ChaCha8 block cipher whose 64-bit stream id selects the weight row
//! (or a reserved purpose). Within a stream, the block counter walks the
//! columns. Every draw is therefore a pure function of
//! `(seed, layer, row, column)`, independent of thread scheduling.
//!
//! Gaussian variates use the ziggurat sampler from `rand_distr`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Reserved stream ids. Row streams use ids `0..n`.
pub mod stream {
    /// One stream per layer for the projected sampler.
    pub const PROJECTED: u64 = u64::MAX;
    /// Draws of random unit directions in the Gaussian-vector self test.
    pub const DIRECTION: u64 = u64::MAX - 1;
    /// Input vector sampling.
    pub const INPUTS: u64 = u64::MAX - 2;
}

/// SplitMix64 finalizer; a bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child key of `parent` labelled by `label`. Injective in `label` for a
/// fixed parent.
#[inline]
pub fn derive(parent: u64, label: u64) -> u64 {
    mix64(parent ^ mix64(label.wrapping_add(GOLDEN)))
}

/// Seed of trial `trial` in grid cell `cell` of a study.
pub fn trial_seed(master: u64, cell: u64, trial: u64) -> u64 {
    derive(derive(master, cell), trial)
}

/// Cell label for a `(width, depth)` grid point.
pub fn cell_label(width: usize, depth: usize) -> u64 {
    ((width as u64) << 32) ^ depth as u64
}

/// 64-bit layer key; the 256-bit cipher key is expanded from it.
pub fn layer_key(seed: u64, layer: u64) -> u64 {
    derive(seed, layer)
}

/// Random stream for `(seed, layer, stream_id)`.
pub fn layer_stream(seed: u64, layer: u64, stream_id: u64) -> ChaCha8Rng {
    let mut state = layer_key(seed, layer);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = state.wrapping_add(GOLDEN);
        chunk.copy_from_slice(&mix64(state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream_id);
    rng
}

#[inline]
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn fill_normal(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = StandardNormal.sample(rng);
    }
}
