//! Ellipse phantoms and synthetic guidance images.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::noise::seeded_rng;

/// An ellipse on the [-1, 1]² canvas, y pointing up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub intensity: f64,
    pub semi_x: f64,
    pub semi_y: f64,
    pub centre_x: f64,
    pub centre_y: f64,
    /// Rotation in degrees, counter-clockwise.
    pub angle_deg: f64,
}

impl Ellipse {
    const fn new(intensity: f64, semi_x: f64, semi_y: f64, cx: f64, cy: f64, angle_deg: f64) -> Self {
        Self {
            intensity,
            semi_x,
            semi_y,
            centre_x: cx,
            centre_y: cy,
            angle_deg,
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = (self.angle_deg * PI / 180.0).sin_cos();
        let (dx, dy) = (x - self.centre_x, y - self.centre_y);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_x).powi(2) + (v / self.semi_y).powi(2) <= 1.0
    }
}

/// Modified (high-contrast) Shepp-Logan ellipses.
pub const SHEPP_LOGAN: [Ellipse; 10] = [
    Ellipse::new(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    Ellipse::new(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    Ellipse::new(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    Ellipse::new(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    Ellipse::new(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    Ellipse::new(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    Ellipse::new(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    Ellipse::new(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    Ellipse::new(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    Ellipse::new(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

pub const MIN_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub size: usize,
    pub ellipses: Vec<Ellipse>,
    /// When set, ellipse parameters are jittered deterministically.
    pub seed: Option<u64>,
}

impl PhantomSpec {
    pub fn shepp_logan(size: usize) -> Self {
        Self {
            size,
            ellipses: SHEPP_LOGAN.to_vec(),
            seed: None,
        }
    }

    pub fn randomized(size: usize, seed: u64) -> Self {
        Self {
            seed: Some(seed),
            ..Self::shepp_logan(size)
        }
    }
}

/// Point-samples the summed ellipse intensities at pixel centres, clamped
/// to [0, 1].
pub fn render(size: usize, ellipses: &[Ellipse]) -> Result<Image> {
    if size < MIN_SIZE {
        return Err(Error::Parameter(format!(
            "phantom size must be at least {MIN_SIZE}, got {size}"
        )));
    }
    let mut img = Image::zeros(size, size);
    let n = size as f64;
    for r in 0..size {
        let y = 1.0 - (2.0 * r as f64 + 1.0) / n;
        for c in 0..size {
            let x = (2.0 * c as f64 + 1.0) / n - 1.0;
            let v: f64 = ellipses
                .iter()
                .filter(|e| e.contains(x, y))
                .map(|e| e.intensity)
                .sum();
            img.set(r, c, v.clamp(0.0, 1.0));
        }
    }
    Ok(img)
}

pub fn shepp_logan(size: usize) -> Result<Image> {
    render(size, &SHEPP_LOGAN)
}

pub fn random_phantom(spec: &PhantomSpec) -> Result<Image> {
    match spec.seed {
        None => render(spec.size, &spec.ellipses),
        Some(seed) => {
            let mut rng = seeded_rng(seed);
            let jittered: Vec<Ellipse> = spec.ellipses.iter().map(|e| jitter(e, &mut rng)).collect();
            render(spec.size, &jittered)
        }
    }
}

/// `count` randomized phantoms with seeds `seed, seed + 1, …`.
pub fn family(size: usize, count: usize, seed: u64) -> Result<Vec<Image>> {
    (0..count as u64)
        .map(|i| random_phantom(&PhantomSpec::randomized(size, seed.wrapping_add(i))))
        .collect()
}

fn jitter<R: Rng>(e: &Ellipse, rng: &mut R) -> Ellipse {
    // small features get a wider intensity spread than the skull and brain
    let intensity_spread = if e.intensity.abs() < 0.5 { 0.5 } else { 0.05 };
    Ellipse {
        intensity: e.intensity * (1.0 + rng.gen_range(-intensity_spread..=intensity_spread)),
        semi_x: e.semi_x * rng.gen_range(0.93..=1.07),
        semi_y: e.semi_y * rng.gen_range(0.93..=1.07),
        centre_x: e.centre_x + rng.gen_range(-0.03..=0.03),
        centre_y: e.centre_y + rng.gen_range(-0.03..=0.03),
        angle_deg: e.angle_deg + rng.gen_range(-6.0..=6.0),
    }
}

/// Synthetic guidance image: a non-monotone intensity remap (zero stays
/// zero) followed by a smooth sub-pixel-to-pixel-scale warp.
pub fn make_condition_pair(x: &Image, seed: u64) -> Image {
    let mut rng = seeded_rng(seed ^ 0x5eed_c0de);
    let amp = 1.2;
    let (fx, fy) = (rng.gen_range(1.0..2.0), rng.gen_range(1.0..2.0));
    let (px, py) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
    let (w, h) = (x.width(), x.height());
    let remapped = x.map(|v| (0.9 * PI * v.clamp(0.0, 1.0)).sin());
    let mut out = Image::zeros(w, h).with_range(x.range());
    for r in 0..h {
        for c in 0..w {
            let (u, v) = (c as f64 / w as f64, r as f64 / h as f64);
            let sx = c as f64 + amp * (2.0 * PI * fy * v + px).sin();
            let sy = r as f64 + amp * (2.0 * PI * fx * u + py).sin();
            out.set(r, c, bilinear(&remapped, sy, sx));
        }
    }
    out
}

fn bilinear(img: &Image, row: f64, col: f64) -> f64 {
    let (r0, c0) = (row.floor(), col.floor());
    let (fr, fc) = (row - r0, col - c0);
    let at = |r: f64, c: f64| -> f64 {
        if r < 0.0 || c < 0.0 || r >= img.height() as f64 || c >= img.width() as f64 {
            0.0
        } else {
            img.get(r as usize, c as usize)
        }
    };
    at(r0, c0) * (1.0 - fr) * (1.0 - fc)
        + at(r0, c0 + 1.0) * (1.0 - fr) * fc
        + at(r0 + 1.0, c0) * fr * (1.0 - fc)
        + at(r0 + 1.0, c0 + 1.0) * fr * fc
}
