use nalgebra::{DMatrix, DVector};

use super::{MeasurementOperator, SolverOptions};
use crate::error::{Error, Result};

/// Singular values below this fraction of the largest are treated as zero.
pub const SVD_CUTOFF: f64 = 1e-10;

/// Explicit matrix operator with cached truncated-SVD factors.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
    image_shape: (usize, usize),
    measurement_shape: (usize, usize),
    // A† = V · diag(1/s) · Uᵀ over the retained singular triplets
    u: DMatrix<f64>,
    inv_s: DVector<f64>,
    v_t: DMatrix<f64>,
    spectral_norm: f64,
}

impl DenseOperator {
    /// Row-major `rows x cols` matrix acting on `1 x cols` images.
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        Self::with_shapes(data, (1, rows), (1, cols))
    }

    /// Row-major matrix whose rows index a `measurement_shape` grid and
    /// whose columns index an `image_shape` grid.
    pub fn with_shapes(
        data: Vec<f64>,
        measurement_shape: (usize, usize),
        image_shape: (usize, usize),
    ) -> Result<Self> {
        let rows = measurement_shape.0 * measurement_shape.1;
        let cols = image_shape.0 * image_shape.1;
        if rows == 0 || cols == 0 {
            return Err(Error::Parameter("dense operator needs nonzero shape".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(
                format!("{} entries ({rows}x{cols})", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        let matrix = DMatrix::from_row_slice(rows, cols, &data);
        let svd = matrix.clone().svd(true, true);
        let u_full = svd.u.expect("requested U");
        let v_t_full = svd.v_t.expect("requested V^T");
        let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| s_max > 0.0 && svd.singular_values[i] > SVD_CUTOFF * s_max)
            .collect();
        let u = DMatrix::from_fn(rows, keep.len(), |r, c| u_full[(r, keep[c])]);
        let v_t = DMatrix::from_fn(keep.len(), cols, |r, c| v_t_full[(keep[r], c)]);
        let inv_s = DVector::from_iterator(
            keep.len(),
            keep.iter().map(|&i| 1.0 / svd.singular_values[i]),
        );
        Ok(Self {
            matrix,
            image_shape,
            measurement_shape,
            u,
            inv_s,
            v_t,
            spectral_norm: s_max,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::new(data, n, n).expect("identity is well-formed")
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(vec![0.0; rows * cols], rows, cols).expect("zero matrix is well-formed")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Number of singular values retained by the truncation.
    pub fn rank(&self) -> usize {
        self.inv_s.len()
    }

    /// The Moore–Penrose pseudo-inverse as an explicit matrix.
    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        let mut scaled = self.v_t.transpose();
        for (j, s) in self.inv_s.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        scaled * self.u.transpose()
    }
}

impl MeasurementOperator for DenseOperator {
    fn image_shape(&self) -> (usize, usize) {
        self.image_shape
    }

    fn measurement_shape(&self) -> (usize, usize) {
        self.measurement_shape
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.matrix.ncols();
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..n).map(|j| self.matrix[(i, j)] * x[j]).sum();
        }
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        let m = self.matrix.nrows();
        for (j, o) in out.iter_mut().enumerate() {
            *o = (0..m).map(|i| self.matrix[(i, j)] * y[i]).sum();
        }
    }

    fn norm_estimate(&self) -> f64 {
        self.spectral_norm
    }

    fn pinv_into(&self, y: &[f64], _options: &SolverOptions) -> Result<Vec<f64>> {
        let y = DVector::from_column_slice(y);
        let coeffs = (self.u.transpose() * y).component_mul(&self.inv_s);
        Ok((self.v_t.transpose() * coeffs).as_slice().to_vec())
    }

    fn pinv_from(&self, y: &[f64], _start: Vec<f64>, options: &SolverOptions) -> Result<Vec<f64>> {
        self.pinv_into(y, options)
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    #[test]
    fn one_by_two_pseudo_inverse() {
        let op = DenseOperator::new(vec![1.0, 0.0], 1, 2).unwrap();
        let x = op.pinv_into(&[5.0], &SolverOptions::default()).unwrap();
        assert_relative_eq!(x[0], 5.0, epsilon = 1e-14);
        assert_relative_eq!(x[1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_matrix_has_zero_pinv() {
        let op = DenseOperator::zeros(1, 3);
        assert_eq!(op.rank(), 0);
        let x = op.pinv_into(&[2.0], &SolverOptions::default()).unwrap();
        assert_eq!(x, vec![0.0; 3]);
    }

    #[test]
    fn rank_deficient_truncation() {
        // second row is twice the first
        let op = DenseOperator::new(vec![1.0, 2.0, 2.0, 4.0], 2, 2).unwrap();
        assert_eq!(op.rank(), 1);
        let p = op.pseudo_inverse();
        let a = op.matrix();
        assert!((a * &p * a - a).norm() < 1e-12);
    }

    #[test]
    fn bad_data_length() {
        assert!(DenseOperator::new(vec![1.0; 5], 2, 3).is_err());
    }
}
