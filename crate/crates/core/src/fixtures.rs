//! Seeded synthetic chromosomes: vertical striped capsules on a noisy light
//! background. Used by tests, benches and the `synth` demo data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureParams {
    pub length: (usize, usize),
    pub width: (usize, usize),
    pub margin: usize,
    pub background: u8,
    pub noise_std: f64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self { length: (70, 100), width: (10, 13), margin: 20, background: 225, noise_std: 3.0 }
    }
}

/// A straight vertical banded bar with rounded caps. Length and width are
/// drawn from the inclusive ranges in `params`.
pub fn striped_bar(params: &FixtureParams, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let length = rng.random_range(params.length.0..=params.length.1);
    let width = rng.random_range(params.width.0..=params.width.1);

    let mut bands = Vec::new();
    let mut pos = 0;
    let mut dark = rng.random_bool(0.5);
    while pos < length {
        let len = rng.random_range(4..=10usize);
        let v: u8 = if dark { rng.random_range(40..=90) } else { rng.random_range(100..=135) };
        bands.extend(std::iter::repeat(v).take(len));
        pos += len;
        dark = !dark;
    }

    let w = width + 2 * params.margin;
    let h = length + 2 * params.margin;
    let r = width as f64 / 2.0;
    let cx = params.margin as f64 + r - 0.5;
    let (top, bottom) = (params.margin as f64 + r - 0.5, (params.margin + length) as f64 - r - 0.5);
    let noise = Normal::new(0.0, params.noise_std.max(0.0)).expect("finite std");
    GrayImage::from_fn(w, h, |x, y| {
        let (px, py) = (x as f64, y as f64);
        let cy = py.clamp(top, bottom);
        let inside = (px - cx).hypot(py - cy) <= r;
        let base = if inside { bands[(y - params.margin).min(length - 1)] } else { params.background } as f64;
        (base + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8
    })
    .expect("non-empty fixture")
}
