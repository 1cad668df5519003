//! Conjugate gradients on the normal equations (CGLS).
//!
//! Started from zero, every iterate lies in the row space of A, so the limit
//! is the minimum-norm least-squares solution.

use serde::{Deserialize, Serialize};

use super::MeasurementOperator;
use crate::error::{Error, Result};
use crate::image::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    /// Relative residual target.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iter: 20_000,
        }
    }
}

impl SolverOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self { tol, max_iter }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!(
                "solver tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Parameter("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverReport {
    pub iterations: usize,
    /// ‖b − A x‖ / ‖b‖ at exit.
    pub relative_residual: f64,
}

/// Solves `min ‖A x − b‖` by CGLS.
///
/// Stops when `‖r‖ ≤ tol·‖b‖` (consistent systems) or when
/// `‖Aᵀr‖ ≤ tol·‖A‖·‖r‖` (the residual is orthogonal to the range, i.e. the
/// least-squares optimum of an inconsistent system).
pub fn cgls<O: MeasurementOperator + ?Sized>(
    op: &O,
    b: &[f64],
    options: &SolverOptions,
) -> Result<(Vec<f64>, SolverReport)> {
    cgls_from(op, b, vec![0.0; op.input_len()], options)
}

/// CGLS started from `x`. The limit is still the minimum-norm solution
/// provided `x` lies in the row space of A (e.g. an earlier CGLS result).
pub fn cgls_from<O: MeasurementOperator + ?Sized>(
    op: &O,
    b: &[f64],
    mut x: Vec<f64>,
    options: &SolverOptions,
) -> Result<(Vec<f64>, SolverReport)> {
    options.validate()?;
    let n = op.input_len();
    let m = op.output_len();
    assert_eq!(b.len(), m, "right-hand side length");
    assert_eq!(x.len(), n, "starting point length");

    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolverReport {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let a_norm = op.norm_estimate();

    let mut r = b.to_vec();
    if x.iter().any(|&v| v != 0.0) {
        let mut ax = vec![0.0; m];
        op.apply_into(&x, &mut ax);
        r.iter_mut().zip(&ax).for_each(|(ri, ai)| *ri -= ai);
    }
    let mut s = vec![0.0; n];
    op.adjoint_into(&r, &mut s);
    let mut p = s.clone();
    let mut q = vec![0.0; m];
    let mut gamma = dot(&s, &s);
    let mut r_norm = norm(&r);

    for k in 0..=options.max_iter {
        if r_norm <= options.tol * b_norm || gamma.sqrt() <= options.tol * a_norm * r_norm {
            return Ok((
                x,
                SolverReport {
                    iterations: k,
                    relative_residual: r_norm / b_norm,
                },
            ));
        }
        if k == options.max_iter {
            break;
        }
        op.apply_into(&p, &mut q);
        let qq = dot(&q, &q);
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= alpha * qi);
        op.adjoint_into(&r, &mut s);
        let gamma_next = dot(&s, &s);
        let beta = gamma_next / gamma;
        gamma = gamma_next;
        p.iter_mut().zip(&s).for_each(|(pi, si)| *pi = si + beta * *pi);
        r_norm = norm(&r);
    }
    Err(Error::Convergence {
        iterations: options.max_iter,
        residual: r_norm / b_norm,
    })
}
