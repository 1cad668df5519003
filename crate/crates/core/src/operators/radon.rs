//! Parallel-beam Radon transform on a square pixel grid.
//!
//! Each ray is sampled at unit spacing and the image is read with bilinear
//! interpolation at every sample point; the line integral is the sum of the
//! samples. The operator is stored as a sparse matrix together with its
//! transpose, so `adjoint` is the exact transpose of `apply` and both run as
//! row gathers with a fixed summation order.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{power_iteration_norm, MeasurementOperator};
use crate::error::{Error, Result};
use crate::image::uniform_angles;

#[derive(Debug, Clone)]
struct SparseRows {
    offsets: Vec<usize>,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseRows {
    fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.offsets[i]..self.offsets[i + 1];
        (&self.indices[range.clone()], &self.weights[range])
    }

    fn gather(&self, x: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let (idx, w) = self.row(i);
            *o = idx.iter().zip(w).map(|(&j, &wj)| wj * x[j]).sum();
        });
    }

    fn transpose(&self, n_cols: usize) -> SparseRows {
        let n_rows = self.offsets.len() - 1;
        let mut counts = vec![0usize; n_cols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..n_cols {
            counts[j + 1] += counts[j];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut indices = vec![0; self.indices.len()];
        let mut weights = vec![0.0; self.weights.len()];
        for i in 0..n_rows {
            let (idx, w) = self.row(i);
            for (&j, &wj) in idx.iter().zip(w) {
                indices[cursor[j]] = i;
                weights[cursor[j]] = wj;
                cursor[j] += 1;
            }
        }
        SparseRows {
            offsets,
            indices,
            weights,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RadonOperator {
    size: usize,
    n_detectors: usize,
    angles: Vec<f64>,
    forward: SparseRows,
    backward: SparseRows,
    spectral_norm: f64,
}

impl RadonOperator {
    /// `n_angles` projections uniformly over [0, π) of an `size x size`
    /// image, with the default detector count.
    pub fn new(size: usize, n_angles: usize) -> Result<Self> {
        Self::with_angles(size, uniform_angles(n_angles), Self::default_detectors(size))
    }

    /// Smallest detector count spanning the image diagonal at unit spacing,
    /// rounded up to the parity of `size` so that axis-aligned rays pass
    /// through pixel centres.
    pub fn default_detectors(size: usize) -> usize {
        let mut d = (size as f64 * std::f64::consts::SQRT_2).ceil() as usize;
        if d % 2 != size % 2 {
            d += 1;
        }
        d
    }

    pub fn with_angles(size: usize, angles: Vec<f64>, n_detectors: usize) -> Result<Self> {
        if size == 0 || n_detectors == 0 || angles.is_empty() {
            return Err(Error::Parameter(format!(
                "Radon geometry needs positive size, detectors and angles (got {size}, {n_detectors}, {})",
                angles.len()
            )));
        }
        // validates ordering and range of the angles
        crate::image::Sinogram::new(angles.len(), 1, vec![0.0; angles.len()], angles.clone())?;

        let forward = build_rows(size, &angles, n_detectors);
        let backward = forward.transpose(size * size);
        let mut op = Self {
            size,
            n_detectors,
            angles,
            forward,
            backward,
            spectral_norm: 0.0,
        };
        op.spectral_norm = power_iteration_norm(&op, 50);
        Ok(op)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn n_detectors(&self) -> usize {
        self.n_detectors
    }

    /// Number of stored matrix entries.
    pub fn nnz(&self) -> usize {
        self.forward.weights.len()
    }
}

fn build_rows(size: usize, angles: &[f64], n_detectors: usize) -> SparseRows {
    let centre = (size as f64 - 1.0) / 2.0;
    let det_centre = (n_detectors as f64 - 1.0) / 2.0;
    // samples along the ray span the same length as the detector array
    let n_samples = n_detectors;
    let mut offsets = vec![0];
    let mut indices = Vec::new();
    let mut weights = Vec::new();
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();

    for &theta in angles {
        let (sin, cos) = theta.sin_cos();
        for det in 0..n_detectors {
            let s = det as f64 - det_centre;
            acc.clear();
            for k in 0..n_samples {
                let tau = k as f64 - det_centre;
                // column (x) and row (y) coordinates of the sample point
                let x = s * cos - tau * sin + centre;
                let y = s * sin + tau * cos + centre;
                let (x0, y0) = (x.floor(), y.floor());
                let (fx, fy) = (x - x0, y - y0);
                let (x0, y0) = (x0 as isize, y0 as isize);
                let corners = [
                    (y0, x0, (1.0 - fx) * (1.0 - fy)),
                    (y0, x0 + 1, fx * (1.0 - fy)),
                    (y0 + 1, x0, (1.0 - fx) * fy),
                    (y0 + 1, x0 + 1, fx * fy),
                ];
                for (r, c, w) in corners {
                    if w == 0.0 || r < 0 || c < 0 || r >= size as isize || c >= size as isize {
                        continue;
                    }
                    *acc.entry(r as usize * size + c as usize).or_insert(0.0) += w;
                }
            }
            for (&j, &w) in &acc {
                indices.push(j);
                weights.push(w);
            }
            offsets.push(indices.len());
        }
    }
    SparseRows {
        offsets,
        indices,
        weights,
    }
}

impl MeasurementOperator for RadonOperator {
    fn image_shape(&self) -> (usize, usize) {
        (self.size, self.size)
    }

    fn measurement_shape(&self) -> (usize, usize) {
        (self.angles.len(), self.n_detectors)
    }

    fn angles(&self) -> &[f64] {
        &self.angles
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.forward.gather(x, out);
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        self.backward.gather(y, out);
    }

    fn norm_estimate(&self) -> f64 {
        self.spectral_norm
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use approx::assert_relative_eq;

    use super::*;
    use crate::image::Image;
    use crate::operators::MeasurementOperator;

    fn disk(n: usize, radius: f64) -> Image {
        let c = (n as f64 - 1.0) / 2.0;
        let mut img = Image::zeros(n, n);
        for r in 0..n {
            for col in 0..n {
                let d = ((r as f64 - c).powi(2) + (col as f64 - c).powi(2)).sqrt();
                if d <= radius {
                    img.set(r, col, 1.0);
                }
            }
        }
        img
    }

    fn blob(n: usize, width: f64) -> Image {
        let c = (n as f64 - 1.0) / 2.0;
        let mut img = Image::zeros(n, n);
        for r in 0..n {
            for col in 0..n {
                let d2 = (r as f64 - c).powi(2) + (col as f64 - c).powi(2);
                img.set(r, col, (-d2 / (2.0 * width * width)).exp());
            }
        }
        img
    }

    #[test]
    fn default_detectors_span_diagonal() {
        assert_eq!(RadonOperator::default_detectors(8), 12);
        assert_eq!(RadonOperator::default_detectors(64), 92);
        assert_eq!(RadonOperator::default_detectors(9), 13);
    }

    #[test]
    fn axis_aligned_projections_of_disk_agree_exactly() {
        let op = RadonOperator::with_angles(32, vec![0.0, PI / 2.0], 46).unwrap();
        let y = (&op as &dyn MeasurementOperator).apply(&disk(32, 10.0)).unwrap();
        for (a, b) in y.row(0).iter().zip(y.row(1)) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn disk_profiles_match_across_angles() {
        // off-grid angles agree up to the pixelisation of the disk edge
        let op = RadonOperator::new(64, 12).unwrap();
        let y = (&op as &dyn MeasurementOperator).apply(&disk(64, 20.0)).unwrap();
        let peak = y.values().iter().cloned().fold(0.0, f64::max);
        for a in 1..12 {
            for (u, v) in y.row(0).iter().zip(y.row(a)) {
                assert!((u - v).abs() <= 0.08 * peak, "angle {a}: {u} vs {v}");
            }
        }
    }

    #[test]
    fn per_angle_mass_is_conserved() {
        let op = RadonOperator::new(48, 23).unwrap();
        let img = blob(48, 6.0);
        let mass = img.sum();
        let y = (&op as &dyn MeasurementOperator).apply(&img).unwrap();
        for a in 0..23 {
            let s: f64 = y.row(a).iter().sum();
            assert_relative_eq!(s, mass, max_relative = 1e-4);
        }
    }

    #[test]
    fn zero_image_maps_to_zero() {
        let op = RadonOperator::new(16, 5).unwrap();
        let y = (&op as &dyn MeasurementOperator).apply(&Image::zeros(16, 16)).unwrap();
        assert!(y.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transpose_is_consistent() {
        let op = RadonOperator::new(8, 4).unwrap();
        let n = op.forward.offsets.len() - 1;
        for i in 0..n {
            let (idx, w) = op.forward.row(i);
            for (&j, &wj) in idx.iter().zip(w) {
                let (tidx, tw) = op.backward.row(j);
                let pos = tidx.iter().position(|&r| r == i).unwrap();
                assert_eq!(tw[pos], wj);
            }
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(RadonOperator::new(0, 4).is_err());
        assert!(RadonOperator::new(8, 0).is_err());
        assert!(RadonOperator::with_angles(8, vec![0.5, 0.2], 12).is_err());
    }
}
