use super::{MeasurementOperator, SolverOptions};
use crate::error::Result;

/// `A = I` on `height x width` images; the measurement is the image itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityOperator {
    height: usize,
    width: usize,
}

impl IdentityOperator {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }
}

impl MeasurementOperator for IdentityOperator {
    fn image_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn measurement_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
    }

    fn norm_estimate(&self) -> f64 {
        1.0
    }

    fn pinv_into(&self, y: &[f64], _options: &SolverOptions) -> Result<Vec<f64>> {
        Ok(y.to_vec())
    }

    fn pinv_from(&self, y: &[f64], _start: Vec<f64>, options: &SolverOptions) -> Result<Vec<f64>> {
        self.pinv_into(y, options)
    }
}
