//! Linear measurement operators `y = A x` and their pseudo-inverses.

mod dense;
mod fbp;
mod identity;
mod radon;
mod solver;

pub use dense::DenseOperator;
pub use fbp::{fbp_reconstruct, Filter};
pub use identity::IdentityOperator;
pub use radon::RadonOperator;
pub use solver::{cgls, cgls_from, SolverOptions, SolverReport};

use crate::error::{Error, Result};
use crate::image::{Image, Sinogram};

/// A linear map from an image to a measurement.
///
/// Implementors provide the flat-slice kernels; the typed methods on
/// `dyn MeasurementOperator` add shape validation.
pub trait MeasurementOperator: Send + Sync {
    /// `(height, width)` of accepted images.
    fn image_shape(&self) -> (usize, usize);

    /// `(rows, cols)` of produced measurements.
    fn measurement_shape(&self) -> (usize, usize);

    /// Projection angles, empty for non-tomographic operators.
    fn angles(&self) -> &[f64] {
        &[]
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]);

    /// Exact transpose of [`Self::apply_into`].
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]);

    /// Upper bound on the spectral norm, used by the solver's stopping rule.
    fn norm_estimate(&self) -> f64 {
        power_iteration_norm(self, 30)
    }

    /// Minimum-norm least-squares solution of `A x = y`.
    ///
    /// The default runs CGLS from a zero start.
    fn pinv_into(&self, y: &[f64], options: &SolverOptions) -> Result<Vec<f64>> {
        let (x, _) = cgls(self, y, options)?;
        Ok(x)
    }

    /// As [`Self::pinv_into`], with an iterative solver started from `start`
    /// (a previous pseudo-inverse output). Exact implementations ignore it.
    fn pinv_from(&self, y: &[f64], start: Vec<f64>, options: &SolverOptions) -> Result<Vec<f64>> {
        let (x, _) = cgls_from(self, y, start, options)?;
        Ok(x)
    }

    fn input_len(&self) -> usize {
        let (h, w) = self.image_shape();
        h * w
    }

    fn output_len(&self) -> usize {
        let (r, c) = self.measurement_shape();
        r * c
    }
}

impl dyn MeasurementOperator + '_ {
    fn check_image(&self, x: &Image) -> Result<()> {
        if x.shape() != self.image_shape() {
            let (h, w) = self.image_shape();
            return Err(Error::shape(
                format!("{h}x{w} image"),
                format!("{}x{} image", x.height(), x.width()),
            ));
        }
        Ok(())
    }

    fn check_measurement(&self, y: &Sinogram) -> Result<()> {
        if y.shape() != self.measurement_shape() {
            let (r, c) = self.measurement_shape();
            return Err(Error::shape(
                format!("{r}x{c} measurement"),
                format!("{}x{} measurement", y.n_angles(), y.n_detectors()),
            ));
        }
        Ok(())
    }

    /// Wraps raw values in a measurement carrying this operator's geometry.
    pub fn measurement(&self, values: Vec<f64>) -> Result<Sinogram> {
        let (r, c) = self.measurement_shape();
        Sinogram::new(r, c, values, self.angles().to_vec())
    }

    fn image(&self, pixels: Vec<f64>) -> Image {
        let (h, w) = self.image_shape();
        Image::new(w, h, pixels).expect("operator produced a well-shaped image")
    }

    pub fn apply(&self, x: &Image) -> Result<Sinogram> {
        self.check_image(x)?;
        let mut out = vec![0.0; self.output_len()];
        self.apply_into(x.pixels(), &mut out);
        self.measurement(out)
    }

    pub fn adjoint(&self, y: &Sinogram) -> Result<Image> {
        self.check_measurement(y)?;
        let mut out = vec![0.0; self.input_len()];
        self.adjoint_into(y.values(), &mut out);
        Ok(self.image(out))
    }

    /// A†y.
    pub fn pinv_apply(&self, y: &Sinogram, options: &SolverOptions) -> Result<Image> {
        self.check_measurement(y)?;
        options.validate()?;
        Ok(self.image(self.pinv_into(y.values(), options)?))
    }

    /// A†A x
    pub fn range_project(&self, x: &Image, options: &SolverOptions) -> Result<Image> {
        let y = self.apply(x)?;
        Ok(self.pinv_apply(&y, options)?.with_range(x.range()))
    }

    /// (I − A†A) x
    pub fn null_project(&self, x: &Image, options: &SolverOptions) -> Result<Image> {
        let r = self.range_project(x, options)?;
        x.lincomb(1.0, &r, -1.0)
    }

    /// Dense copy of the operator, built column by column from `apply`.
    pub fn materialize(&self) -> DenseOperator {
        let n = self.input_len();
        let m = self.output_len();
        let mut data = vec![0.0; m * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; m];
        for j in 0..n {
            e[j] = 1.0;
            self.apply_into(&e, &mut col);
            for i in 0..m {
                data[i * n + j] = col[i];
            }
            e[j] = 0.0;
        }
        DenseOperator::with_shapes(data, self.measurement_shape(), self.image_shape())
            .expect("materialized shapes are consistent")
    }
}

/// ‖A‖₂ estimate from power iteration on AᵀA, started from all-ones.
pub(crate) fn power_iteration_norm<O: MeasurementOperator + ?Sized>(op: &O, iters: usize) -> f64 {
    let n = op.input_len();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut y = vec![0.0; op.output_len()];
    let mut lambda = 0.0;
    for _ in 0..iters {
        op.apply_into(&x, &mut y);
        op.adjoint_into(&y, &mut x);
        let nrm = crate::image::norm(&x);
        if nrm == 0.0 {
            return 0.0;
        }
        lambda = nrm;
        x.iter_mut().for_each(|v| *v /= nrm);
    }
    // slight inflation keeps this an upper bound in practice
    lambda.sqrt() * 1.01
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    #[test]
    fn power_iteration_on_diagonal() {
        let op = DenseOperator::new(vec![3.0, 0.0, 0.0, 0.5], 2, 2).unwrap();
        let est = power_iteration_norm(&op, 50);
        assert_relative_eq!(est, 3.0 * 1.01, max_relative = 1e-6);
    }

    #[test]
    fn typed_wrappers_check_shapes() {
        let op: &dyn MeasurementOperator = &IdentityOperator::new(2, 2);
        assert!(op.apply(&Image::zeros(3, 2)).is_err());
        let y = Sinogram::plain(1, 4, vec![0.0; 4]).unwrap();
        assert!(op.adjoint(&y).is_err());
    }
}
