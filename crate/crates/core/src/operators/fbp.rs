//! Filtered backprojection baseline.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{MeasurementOperator, RadonOperator};
use crate::error::Result;
use crate::image::{Image, Sinogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Filter {
    RamLak,
    None,
}

impl std::str::FromStr for Filter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ram-lak" => Ok(Filter::RamLak),
            "none" => Ok(Filter::None),
            other => Err(format!("unknown filter '{other}' (expected ram-lak or none)")),
        }
    }
}

/// Spatial Ram-Lak kernel for unit detector spacing.
fn ram_lak_tap(k: isize) -> f64 {
    if k == 0 {
        0.25
    } else if k % 2 == 0 {
        0.0
    } else {
        -1.0 / (PI * PI * (k * k) as f64)
    }
}

/// Convolves every projection row with the Ram-Lak kernel (linear, not
/// circular, convolution via zero-padded FFT).
fn ramp_filter(y: &Sinogram) -> Vec<f64> {
    let len = y.n_detectors();
    let padded = (2 * len).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(padded);
    let ifft = planner.plan_fft_inverse(padded);

    let mut kernel = vec![Complex::new(0.0, 0.0); padded];
    for k in -(len as isize - 1)..len as isize {
        let idx = k.rem_euclid(padded as isize) as usize;
        kernel[idx] = Complex::new(ram_lak_tap(k), 0.0);
    }
    fft.process(&mut kernel);

    let mut out = Vec::with_capacity(y.len());
    let mut buf = vec![Complex::new(0.0, 0.0); padded];
    for a in 0..y.n_angles() {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (b, &v) in buf.iter_mut().zip(y.row(a)) {
            *b = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        buf.iter_mut().zip(&kernel).for_each(|(b, k)| *b *= k);
        ifft.process(&mut buf);
        out.extend(buf[..len].iter().map(|c| c.re / padded as f64));
    }
    out
}

/// Backprojection of the (optionally ramp-filtered) sinogram, scaled by the
/// angular step π/N_p, without clamping.
pub fn backproject(op: &RadonOperator, y: &Sinogram, filter: Filter) -> Result<Image> {
    let dyn_op: &dyn MeasurementOperator = op;
    let filtered = match filter {
        Filter::RamLak => y.like(ramp_filter(y)),
        Filter::None => y.clone(),
    };
    let bp = dyn_op.adjoint(&filtered)?;
    let scale = PI / op.n_angles() as f64;
    Ok(bp.map(|v| v * scale))
}

/// Filtered backprojection clamped to [0, 1].
pub fn fbp_reconstruct(op: &RadonOperator, y: &Sinogram, filter: Filter) -> Result<Image> {
    Ok(backproject(op, y, filter)?.clamped())
}
