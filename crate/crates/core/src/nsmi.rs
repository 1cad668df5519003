//! Null-space measurement inference: replacing the range-space content of a
//! one-step clean estimate with what the measurements dictate.
//!
//! Noiseless: x̂0 = x0 − A†(A x0 − y).
//! Noisy:     x̂0 = x0 − γ_t A†(A x0 − y), with the step noise split into a
//! measurement part of std γ_t·c0_t·σ_n and an extra part of variance φ_t so
//! that the total stays σ_t².

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{Image, Sinogram};
use crate::noise::{standard_normal, standard_normal_vec};
use crate::operators::{MeasurementOperator, SolverOptions};
use crate::schedule::NoiseSchedule;

/// Per-step range-correction scales γ_t and extra-noise variances φ_t.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyNsmiParams {
    sigma_n: f64,
    gamma: Vec<f64>,
    phi: Vec<f64>,
    // √ᾱ_{t−1}·β_t / (1 − ᾱ_t), the x̂0 coefficient of the posterior mean
    x0_coef: Vec<f64>,
}

impl NoisyNsmiParams {
    pub fn sigma_n(&self) -> f64 {
        self.sigma_n
    }

    pub fn gamma(&self, t: usize) -> f64 {
        self.gamma[t - 1]
    }

    pub fn phi(&self, t: usize) -> f64 {
        self.phi[t - 1]
    }

    /// Standard deviation of ε_measure at step `t`.
    pub fn measurement_std(&self, t: usize) -> f64 {
        self.gamma(t) * self.x0_coef[t - 1] * self.sigma_n
    }

    pub fn num_steps(&self) -> usize {
        self.gamma.len()
    }
}

pub fn compute_gamma_phi(schedule: &NoiseSchedule, sigma_n: f64) -> Result<NoisyNsmiParams> {
    if !(sigma_n >= 0.0) || !sigma_n.is_finite() {
        return Err(Error::Parameter(format!(
            "sigma_n must be a finite non-negative number, got {sigma_n}"
        )));
    }
    let steps = schedule.num_steps();
    let mut gamma = Vec::with_capacity(steps);
    let mut phi = Vec::with_capacity(steps);
    let mut x0_coef = Vec::with_capacity(steps);
    for t in 1..=steps {
        let (c0, _) = schedule.posterior_coefficients(t);
        let var = schedule.posterior_variance(t);
        let sigma = var.sqrt();
        let threshold = c0 * sigma_n;
        if sigma >= threshold {
            gamma.push(1.0);
            phi.push((var - threshold * threshold).max(0.0));
        } else {
            // the measurement noise alone exhausts the budget
            gamma.push(sigma / threshold);
            phi.push(0.0);
        }
        x0_coef.push(c0);
    }
    Ok(NoisyNsmiParams {
        sigma_n,
        gamma,
        phi,
        x0_coef,
    })
}

/// Tolerance handed to the pseudo-inverse so that the corrected estimate
/// satisfies `‖A x̂0 − y‖ ≤ tol·‖y‖` rather than a bound relative to the
/// (possibly larger) initial residual.
fn scaled_options(options: &SolverOptions, y_norm: f64, r_norm: f64) -> SolverOptions {
    let tol = if y_norm > 0.0 {
        options.tol * y_norm / r_norm
    } else {
        options.tol
    };
    SolverOptions {
        tol,
        max_iter: options.max_iter,
    }
}

/// Computes range corrections A†(A x0 − y) for a sequence of estimates,
/// starting each iterative solve from the previous correction.
#[derive(Debug, Clone)]
pub struct RangeCorrector {
    options: SolverOptions,
    previous: Option<Vec<f64>>,
}

impl RangeCorrector {
    pub fn new(options: SolverOptions) -> Self {
        Self {
            options,
            previous: None,
        }
    }

    /// A†(A x0 − y), or `None` when the residual is exactly zero.
    pub fn correction(
        &mut self,
        op: &dyn MeasurementOperator,
        x0t: &Image,
        y: &Sinogram,
    ) -> Result<Option<Image>> {
        let r = op.apply(x0t)?.sub(y)?;
        let r_norm = r.norm();
        if r_norm == 0.0 {
            return Ok(None);
        }
        let opts = scaled_options(&self.options, y.norm(), r_norm);
        let start = self
            .previous
            .take()
            .unwrap_or_else(|| vec![0.0; op.input_len()]);
        let c = op.pinv_from(r.values(), start, &opts)?;
        self.previous = Some(c.clone());
        Ok(Some(x0t.like(c)))
    }

    /// x0 − γ·A†(A x0 − y).
    pub fn refine(
        &mut self,
        op: &dyn MeasurementOperator,
        x0t: &Image,
        y: &Sinogram,
        gamma: f64,
    ) -> Result<Image> {
        if gamma == 0.0 {
            return Ok(x0t.clone());
        }
        match self.correction(op, x0t, y)? {
            Some(c) => x0t.lincomb(1.0, &c, -gamma),
            None => Ok(x0t.clone()),
        }
    }
}

/// x̂0 = x0 − A†(A x0 − y).
pub fn refine_noiseless(
    op: &dyn MeasurementOperator,
    x0t: &Image,
    y: &Sinogram,
    options: &SolverOptions,
) -> Result<Image> {
    RangeCorrector::new(*options).refine(op, x0t, y, 1.0)
}

/// x̂0 = x0 − γ_t·A†(A x0 − y). The stochastic measurement term is drawn in
/// [`step_noisy`].
pub fn refine_noisy(
    op: &dyn MeasurementOperator,
    x0t: &Image,
    y: &Sinogram,
    params: &NoisyNsmiParams,
    t: usize,
    options: &SolverOptions,
) -> Result<Image> {
    if t == 0 || t > params.num_steps() {
        return Err(Error::Parameter(format!("timestep {t} out of range")));
    }
    RangeCorrector::new(*options).refine(op, x0t, y, params.gamma(t))
}

/// x_{t−1} = c0·x̂0 + ct·x_t + ε_measure + ε_extra.
///
/// Draw order: the ε_measure image (only if its std is positive), then the
/// ε_extra image (only if φ_t > 0). Nothing is drawn at `t = 1`.
pub fn step_noisy<R: Rng + ?Sized>(
    schedule: &NoiseSchedule,
    params: &NoisyNsmiParams,
    x_t: &Image,
    x0t_refined: &Image,
    t: usize,
    rng: &mut R,
) -> Result<Image> {
    if params.num_steps() != schedule.num_steps() {
        return Err(Error::Parameter(
            "N-SMI parameters were computed for a different schedule".into(),
        ));
    }
    let mut out = schedule.posterior_mean(x_t, x0t_refined, t)?;
    if t == 1 {
        return Ok(out);
    }
    let (w, h) = (x_t.width(), x_t.height());
    let measure_std = params.measurement_std(t);
    if measure_std > 0.0 {
        let n = standard_normal(rng, w, h);
        add_scaled(&mut out, &n, measure_std);
    }
    let phi = params.phi(t);
    if phi > 0.0 {
        let n = standard_normal(rng, w, h);
        add_scaled(&mut out, &n, phi.sqrt());
    }
    Ok(out)
}

fn add_scaled(out: &mut Image, noise: &Image, scale: f64) {
    for (o, n) in out.pixels_mut().iter_mut().zip(noise.pixels()) {
        *o += scale * n;
    }
}

/// Relative solver tolerance implementing the discrepancy principle for
/// measurements carrying N(0, noise_std²) noise: refinement stops once
/// `‖A x̂0 − y‖` reaches the expected noise norm `noise_std·√m`.
pub fn discrepancy_tolerance(y: &Sinogram, noise_std: f64) -> Result<f64> {
    let y_norm = y.norm();
    if !(noise_std > 0.0) || y_norm == 0.0 {
        return Err(Error::Parameter(
            "discrepancy tolerance needs positive noise and a non-zero measurement".into(),
        ));
    }
    Ok(noise_std * (y.values().len() as f64).sqrt() / y_norm)
}

/// Image-domain noise level for noisy-mode sampling: the per-pixel RMS of
/// A†(A r + n) − A†(A r) over `draws` noise draws, for a reference image `r`
/// and n ~ N(0, sinogram_std²·I).
///
/// A† is evaluated with the scaled tolerance used during sampling, so the
/// estimate reflects the regularisation of the iterative solve. A†n is not
/// isotropic; this is only an effective scale.
pub fn calibrate_sigma_n<R: Rng + ?Sized>(
    op: &dyn MeasurementOperator,
    reference: &Image,
    sinogram_std: f64,
    draws: usize,
    options: &SolverOptions,
    rng: &mut R,
) -> Result<f64> {
    if draws == 0 {
        return Err(Error::Parameter("need at least one draw".into()));
    }
    let clean = op.apply(reference)?;
    let zero = reference.like(vec![0.0; reference.len()]);
    let base = RangeCorrector::new(*options).refine(op, &zero, &clean, 1.0)?;
    let mut acc = 0.0;
    for _ in 0..draws {
        let noisy = clean.like(
            clean
                .values()
                .iter()
                .zip(standard_normal_vec(rng, clean.values().len()))
                .map(|(v, g)| v + sinogram_std * g)
                .collect(),
        );
        let x = RangeCorrector::new(*options).refine(op, &zero, &noisy, 1.0)?;
        acc += x
            .pixels()
            .iter()
            .zip(base.pixels())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / x.len() as f64;
    }
    Ok((acc / draws as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::noise::seeded_rng;
    use crate::operators::{DenseOperator, IdentityOperator};

    fn row(values: &[f64]) -> Image {
        Image::new(values.len(), 1, values.to_vec()).unwrap()
    }

    fn meas(values: &[f64]) -> Sinogram {
        Sinogram::plain(1, values.len(), values.to_vec()).unwrap()
    }

    #[test]
    fn identity_refine_returns_measurement() {
        let op = IdentityOperator::new(1, 3);
        let out = refine_noiseless(&op, &row(&[9.0, -1.0, 0.5]), &meas(&[1.0, 2.0, 3.0]), &SolverOptions::default()).unwrap();
        assert_eq!(out.pixels(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_operator_leaves_estimate() {
        let op = DenseOperator::zeros(1, 2);
        let x = row(&[0.25, 0.75]);
        let out = refine_noiseless(&op, &x, &meas(&[4.0]), &SolverOptions::default()).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn selector_refine_hand_value() {
        let op = DenseOperator::new(vec![1.0, 0.0], 1, 2).unwrap();
        let out = refine_noiseless(&op, &row(&[2.0, 3.0]), &meas(&[5.0]), &SolverOptions::default()).unwrap();
        assert_relative_eq!(out.pixels()[0], 5.0, epsilon = 1e-14);
        assert_relative_eq!(out.pixels()[1], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_sigma_n_is_plain_ddpm_budget() {
        let s = NoiseSchedule::linear(50, 1e-3, 0.05).unwrap();
        let p = compute_gamma_phi(&s, 0.0).unwrap();
        for t in 1..=50 {
            assert_eq!(p.gamma(t), 1.0);
            assert_eq!(p.phi(t), s.posterior_variance(t));
            assert_eq!(p.measurement_std(t), 0.0);
        }
    }

    #[test]
    fn four_step_branches_by_hand() {
        // T = 4, β = 0.1..0.4, σ_n = 0.5; ᾱ = 0.9, 0.72, 0.504, 0.3024
        let s = NoiseSchedule::linear(4, 0.1, 0.4).unwrap();
        let p = compute_gamma_phi(&s, 0.5).unwrap();
        let ab = [1.0, 0.9, 0.72, 0.504, 0.3024];
        let beta = [0.0, 0.1, 0.2, 0.3, 0.4];
        for t in 1..=4 {
            let var: f64 = (1.0 - ab[t - 1]) / (1.0 - ab[t]) * beta[t];
            let thr = ab[t - 1].sqrt() * beta[t] * 0.5 / (1.0 - ab[t]);
            let (g, phi) = if var.sqrt() >= thr {
                (1.0, var - thr * thr)
            } else {
                (var.sqrt() / thr, 0.0)
            };
            assert_relative_eq!(p.gamma(t), g, epsilon = 1e-12);
            assert_relative_eq!(p.phi(t), phi, epsilon = 1e-12);
        }
        // t = 1: σ_1 = 0 and the threshold is 0.5, so no correction at all
        assert_eq!(p.gamma(1), 0.0);
        // t = 2: σ² = 0.1/0.28·0.2 ≈ 0.0714 (σ ≈ 0.267); thr = √0.9·0.2·0.5/0.28 ≈ 0.339
        assert!(p.gamma(2) < 1.0 && p.phi(2) == 0.0);
        // t = 4: σ² = 0.496/0.6976·0.4 ≈ 0.284 (σ ≈ 0.533); thr = √0.504·0.4·0.5/0.6976 ≈ 0.2035
        assert_eq!(p.gamma(4), 1.0);
        assert_relative_eq!(p.phi(4), 0.496 / 0.6976 * 0.4 - (0.504f64.sqrt() * 0.2 / 0.6976).powi(2), epsilon = 1e-12);
    }

    #[test]
    fn variance_budget_holds() {
        let s = NoiseSchedule::default_linear();
        for sn in [0.0, 0.1, 0.5, 2.0] {
            let p = compute_gamma_phi(&s, sn).unwrap();
            for t in 1..=s.num_steps() {
                let total = p.measurement_std(t).powi(2) + p.phi(t);
                assert!((total - s.posterior_variance(t)).abs() <= 1e-10);
                assert!(p.phi(t) >= 0.0);
                assert!((0.0..=1.0).contains(&p.gamma(t)));
            }
        }
        assert!(compute_gamma_phi(&s, -1.0).is_err());
    }

    #[test]
    fn refine_noisy_scalar() {
        let s = NoiseSchedule::linear(4, 0.1, 0.4).unwrap();
        let mut p = compute_gamma_phi(&s, 0.0).unwrap();
        p.gamma[2] = 0.5;
        let op = IdentityOperator::new(1, 1);
        let out = refine_noisy(&op, &row(&[2.0]), &meas(&[4.0]), &p, 3, &SolverOptions::default()).unwrap();
        assert_eq!(out.pixels(), &[3.0]);
    }

    #[test]
    fn refine_noisy_residual_shrinks_by_one_minus_gamma() {
        let s = NoiseSchedule::linear(4, 0.1, 0.4).unwrap();
        let p = compute_gamma_phi(&s, 0.5).unwrap();
        let op = IdentityOperator::new(1, 3);
        let x = row(&[0.3, -0.2, 1.4]);
        let y = meas(&[1.0, 0.0, -1.0]);
        let t = 2;
        let out = refine_noisy(&op, &x, &y, &p, t, &SolverOptions::default()).unwrap();
        let dop: &dyn MeasurementOperator = &op;
        let before = dop.apply(&x).unwrap().sub(&y).unwrap().norm();
        let after = dop.apply(&out).unwrap().sub(&y).unwrap().norm();
        assert_relative_eq!(after, (1.0 - p.gamma(t)) * before, epsilon = 1e-12);
    }

    #[test]
    fn refine_noisy_with_zero_sigma_matches_noiseless() {
        let s = NoiseSchedule::linear(4, 0.1, 0.4).unwrap();
        let p = compute_gamma_phi(&s, 0.0).unwrap();
        let op = DenseOperator::new(vec![1.0, 2.0, 0.0, -1.0, 0.5, 3.0], 2, 3).unwrap();
        let x = row(&[0.3, -0.2, 1.4]);
        let y = meas(&[1.0, 2.0]);
        let o = SolverOptions::default();
        assert_eq!(
            refine_noisy(&op, &x, &y, &p, 3, &o).unwrap(),
            refine_noiseless(&op, &x, &y, &o).unwrap()
        );
    }

    #[test]
    fn step_noisy_reduces_to_ddpm() {
        let s = NoiseSchedule::linear(20, 1e-3, 0.1).unwrap();
        let p = compute_gamma_phi(&s, 0.0).unwrap();
        let xt = row(&[0.4, -1.0, 0.1, 0.9]);
        let x0 = row(&[0.2, 0.3, 0.0, 1.0]);
        for t in [1, 2, 11, 20] {
            let a = step_noisy(&s, &p, &xt, &x0, t, &mut seeded_rng(3)).unwrap();
            let noise = standard_normal(&mut seeded_rng(3), 4, 1);
            let b = s.ddpm_step(&xt, &x0, t, &noise).unwrap();
            assert_eq!(a, b, "t = {t}");
        }
    }

    #[test]
    fn second_branch_draws_only_measurement_noise() {
        let s = NoiseSchedule::linear(20, 1e-3, 0.1).unwrap();
        let p = compute_gamma_phi(&s, 5.0).unwrap();
        let t = (2..=20).find(|&t| p.phi(t) == 0.0).expect("a second-branch step");
        let xt = row(&[0.4, -1.0]);
        let x0 = row(&[0.2, 0.3]);
        let mut rng = seeded_rng(9);
        let out = step_noisy(&s, &p, &xt, &x0, t, &mut rng).unwrap();
        let mean = s.posterior_mean(&xt, &x0, t).unwrap();
        let n = standard_normal(&mut seeded_rng(9), 2, 1);
        for i in 0..2 {
            let want = mean.pixels()[i] + p.measurement_std(t) * n.pixels()[i];
            assert_eq!(out.pixels()[i], want);
        }
        // exactly one image was consumed
        let mut check = seeded_rng(9);
        standard_normal(&mut check, 2, 1);
        assert_eq!(standard_normal(&mut rng, 1, 1), standard_normal(&mut check, 1, 1));
    }

    #[test]
    fn step_noisy_empirical_variance() {
        let s = NoiseSchedule::linear(100, 1e-3, 0.05).unwrap();
        let p = compute_gamma_phi(&s, 0.3).unwrap();
        let t = 40;
        assert!(p.measurement_std(t) > 0.0 && p.phi(t) > 0.0);
        let xt = Image::zeros(100, 10);
        let x0 = Image::zeros(100, 10);
        let mut rng = seeded_rng(1);
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for _ in 0..100 {
            let out = step_noisy(&s, &p, &xt, &x0, t, &mut rng).unwrap();
            sum_sq += out.pixels().iter().map(|v| v * v).sum::<f64>();
            count += out.len();
        }
        let var = sum_sq / count as f64;
        assert_relative_eq!(var, s.posterior_variance(t), max_relative = 0.02);
    }

    #[test]
    fn discrepancy_tolerance_hand_value() {
        // ‖y‖ = 5, m = 4, σ = 0.5 → 0.5·2/5
        let y = meas(&[3.0, 4.0, 0.0, 0.0]);
        assert_relative_eq!(discrepancy_tolerance(&y, 0.5).unwrap(), 0.2, epsilon = 1e-15);
        assert!(discrepancy_tolerance(&y, 0.0).is_err());
        assert!(discrepancy_tolerance(&meas(&[0.0]), 1.0).is_err());
    }

    #[test]
    fn calibration_on_identity_recovers_noise_std() {
        // A† = I, so the difference is the noise itself
        let op = IdentityOperator::new(20, 20);
        let reference = Image::filled(20, 20, 0.5);
        let est = calibrate_sigma_n(&op, &reference, 0.3, 20, &SolverOptions::default(), &mut seeded_rng(4))
            .unwrap();
        // 8000 squared draws: relative std of the RMS ≈ 1/√(2·8000)
        assert!((est - 0.3).abs() < 0.3 * 4.0 / (2.0f64 * 8000.0).sqrt(), "{est}");
    }

    #[test]
    fn warm_started_corrections_match_cold_solves() {
        use crate::operators::RadonOperator;
        let op = RadonOperator::new(16, 5).unwrap();
        let op: &dyn MeasurementOperator = &op;
        let truth = standard_normal(&mut seeded_rng(1), 16, 16).map(|v| 0.5 + 0.1 * v);
        let y = op.apply(&truth).unwrap();
        let opts = SolverOptions::new(1e-8, 20_000);
        let mut warm = RangeCorrector::new(opts);
        let mut rng = seeded_rng(2);
        for _ in 0..3 {
            let x0 = standard_normal(&mut rng, 16, 16);
            let a = warm.refine(op, &x0, &y, 1.0).unwrap();
            let b = refine_noiseless(op, &x0, &y, &opts).unwrap();
            let res = op.apply(&a).unwrap().sub(&y).unwrap().norm() / y.norm();
            assert!(res <= 1e-8 * 1.01, "{res}");
            let diff = a.lincomb(1.0, &b, -1.0).unwrap().norm() / b.norm();
            assert!(diff < 1e-4, "{diff}");
        }
    }
}
