//! Scalar fields in the image and measurement domains.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal value range of an image's pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ValueRange {
    /// [0, 1]
    #[default]
    Unit,
    /// [-1, 1]
    Signed,
}

impl ValueRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            ValueRange::Unit => (0.0, 1.0),
            ValueRange::Signed => (-1.0, 1.0),
        }
    }

    pub fn width(self) -> f64 {
        let (lo, hi) = self.bounds();
        hi - lo
    }
}

/// Row-major 2-D image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    range: ValueRange,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::shape(
                format!("{} pixels ({width}x{height})", width * height),
                format!("{} pixels", pixels.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
            range: ValueRange::Unit,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![value; width * height],
            range: ValueRange::Unit,
        }
    }

    /// An image with the same shape and range tag holding `pixels`.
    pub fn like(&self, pixels: Vec<f64>) -> Self {
        assert_eq!(pixels.len(), self.pixels.len());
        Self {
            width: self.width,
            height: self.height,
            pixels,
            range: self.range,
        }
    }

    pub fn with_range(mut self, range: ValueRange) -> Self {
        self.range = range;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ));
        }
        Ok(())
    }

    /// `a * self + b * other`, elementwise.
    pub fn lincomb(&self, a: f64, other: &Image, b: f64) -> Result<Image> {
        self.ensure_same_shape(other)?;
        Ok(self.like(
            self.pixels
                .iter()
                .zip(&other.pixels)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        ))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        self.like(self.pixels.iter().map(|&v| f(v)).collect())
    }

    pub fn clamped(&self) -> Image {
        let (lo, hi) = self.range.bounds();
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.pixels)
    }

    /// True when every pixel lies inside the range tag's bounds, within `tol`.
    pub fn respects_range(&self, tol: f64) -> bool {
        let (lo, hi) = self.range.bounds();
        self.pixels.iter().all(|&v| v >= lo - tol && v <= hi + tol)
    }
}

/// Angle-major stack of 1-D projections.
///
/// `angles` is empty for measurements that are not tomographic (dense and
/// identity operators); otherwise it holds one angle per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    n_angles: usize,
    n_detectors: usize,
    values: Vec<f64>,
    angles: Vec<f64>,
}

impl Sinogram {
    pub fn new(
        n_angles: usize,
        n_detectors: usize,
        values: Vec<f64>,
        angles: Vec<f64>,
    ) -> Result<Self> {
        if n_angles == 0 || n_detectors == 0 {
            return Err(Error::Parameter(format!(
                "sinogram dimensions must be positive, got {n_angles}x{n_detectors}"
            )));
        }
        if values.len() != n_angles * n_detectors {
            return Err(Error::shape(
                format!("{} values ({n_angles}x{n_detectors})", n_angles * n_detectors),
                format!("{} values", values.len()),
            ));
        }
        if !angles.is_empty() {
            if angles.len() != n_angles {
                return Err(Error::shape(
                    format!("{n_angles} angles"),
                    format!("{} angles", angles.len()),
                ));
            }
            validate_angles(&angles)?;
        }
        Ok(Self {
            n_angles,
            n_detectors,
            values,
            angles,
        })
    }

    /// A measurement vector with no tomographic geometry, shaped `rows x cols`.
    pub fn plain(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(rows, cols, values, Vec::new())
    }

    pub fn like(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            n_angles: self.n_angles,
            n_detectors: self.n_detectors,
            values,
            angles: self.angles.clone(),
        }
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn n_detectors(&self) -> usize {
        self.n_detectors
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_angles, self.n_detectors)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Projection profile for one angle.
    pub fn row(&self, angle_index: usize) -> &[f64] {
        let start = angle_index * self.n_detectors;
        &self.values[start..start + self.n_detectors]
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn sub(&self, other: &Sinogram) -> Result<Sinogram> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{}x{}", self.n_angles, self.n_detectors),
                format!("{}x{}", other.n_angles, other.n_detectors),
            ));
        }
        Ok(self.like(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }
}

fn validate_angles(angles: &[f64]) -> Result<()> {
    for (i, &a) in angles.iter().enumerate() {
        if !(0.0..PI).contains(&a) {
            return Err(Error::Parameter(format!(
                "angle {i} = {a} outside [0, pi)"
            )));
        }
        if i > 0 && a <= angles[i - 1] {
            return Err(Error::Parameter(
                "projection angles must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}

/// `count` angles uniformly covering [0, pi).
pub fn uniform_angles(count: usize) -> Vec<f64> {
    (0..count).map(|i| i as f64 * PI / count as f64).collect()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
