//! Seedable Gaussian noise used by the samplers and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::image::Image;

pub type SamplerRng = ChaCha20Rng;

pub fn seeded_rng(seed: u64) -> SamplerRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Independent N(0, 1) pixels drawn in row-major order.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, width: usize, height: usize) -> Image {
    let pixels = (0..width * height)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Image::new(width, height, pixels).expect("positive dimensions")
}

pub fn standard_normal_like<R: Rng + ?Sized>(rng: &mut R, like: &Image) -> Image {
    let mut img = standard_normal(rng, like.width(), like.height());
    img = img.with_range(like.range());
    img
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}
