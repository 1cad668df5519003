//! PSNR and SSIM.
//!
//! SSIM uses a normalised Gaussian window (default 11 taps, σ = 1.5) over
//! every position where the window fits inside the image, with stabilisers
//! C1 = (0.01·L)² and C2 = (0.03·L)².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub const DEFAULT_WINDOW: usize = 11;
pub const DEFAULT_SIGMA: f64 = 1.5;
pub const DEFAULT_DATA_RANGE: f64 = 1.0;

/// Metric conventions, recorded next to every table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSettings {
    pub data_range: f64,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            data_range: DEFAULT_DATA_RANGE,
            ssim_window: DEFAULT_WINDOW,
            ssim_sigma: DEFAULT_SIGMA,
        }
    }
}

fn check(a: &Image, b: &Image, data_range: f64) -> Result<()> {
    a.ensure_same_shape(b)?;
    if !(data_range > 0.0) {
        return Err(Error::Parameter(format!(
            "data range must be positive, got {data_range}"
        )));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    Ok(a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64)
}

/// 10·log10(L² / MSE) in dB; `f64::INFINITY` for identical images.
pub fn psnr(a: &Image, b: &Image, data_range: f64) -> Result<f64> {
    check(a, b, data_range)?;
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / m).log10())
}

fn gaussian_taps(window: usize, sigma: f64) -> Vec<f64> {
    let c = (window as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..window)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" correlation of a row-major field with `taps` along
/// both axes.
fn filter_valid(field: &[f64], width: usize, height: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = taps.len();
    let (ow, oh) = (width + 1 - k, height + 1 - k);
    let mut horiz = vec![0.0; ow * height];
    for r in 0..height {
        let row = &field[r * width..(r + 1) * width];
        for c in 0..ow {
            horiz[r * ow + c] = taps.iter().zip(&row[c..c + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * horiz[(r + i) * ow + c])
                .sum();
        }
    }
    (out, ow, oh)
}

/// Mean SSIM. A window larger than the image is shrunk to the largest odd
/// size that fits.
pub fn ssim(a: &Image, b: &Image, window: usize, data_range: f64) -> Result<f64> {
    ssim_with_sigma(a, b, window, DEFAULT_SIGMA, data_range)
}

pub fn ssim_with_sigma(a: &Image, b: &Image, window: usize, sigma: f64, data_range: f64) -> Result<f64> {
    check(a, b, data_range)?;
    if window == 0 || window % 2 == 0 {
        return Err(Error::Parameter(format!("SSIM window must be odd, got {window}")));
    }
    let (w, h) = (a.width(), a.height());
    let mut win = window.min(w).min(h);
    if win % 2 == 0 {
        win -= 1;
    }
    let taps = gaussian_taps(win, sigma);
    let (pa, pb) = (a.pixels(), b.pixels());
    let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x * y).collect();

    let (mu_a, _, _) = filter_valid(pa, w, h, &taps);
    let (mu_b, _, _) = filter_valid(pb, w, h, &taps);
    let (e_aa, _, _) = filter_valid(&aa, w, h, &taps);
    let (e_bb, _, _) = filter_valid(&bb, w, h, &taps);
    let (e_ab, _, _) = filter_valid(&ab, w, h, &taps);

    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    let total: f64 = (0..mu_a.len())
        .map(|i| local_ssim(mu_a[i], mu_b[i], e_aa[i], e_bb[i], e_ab[i], c1, c2))
        .sum();
    Ok(total / mu_a.len() as f64)
}

/// SSIM of one window from its weighted first and second moments.
pub(crate) fn local_ssim(mu_a: f64, mu_b: f64, e_aa: f64, e_bb: f64, e_ab: f64, c1: f64, c2: f64) -> f64 {
    let var_a = e_aa - mu_a * mu_a;
    let var_b = e_bb - mu_b * mu_b;
    let cov = e_ab - mu_a * mu_b;
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}
