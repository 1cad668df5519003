//! Diffusion noise schedules, forward diffusion and single reverse steps.
//!
//! Timesteps are 1-based: `t` ranges over `1..=T`. The convention
//! `alpha_bar(0) = 1` makes the posterior variance at `t = 1` vanish, so the
//! last reverse step adds no noise.

use crate::error::{Error, Result};
use crate::image::Image;

pub const DEFAULT_T: usize = 2000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;
pub const DEFAULT_DDIM_STEPS: usize = 100;

/// Immutable β/α/ᾱ/σ² tables for a `T`-step diffusion.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    posterior_var: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear β from `beta_start` to `beta_end`, both endpoints included.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Parameter(format!("T must be at least 2, got {steps}")));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Parameter(format!(
                "need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
            )));
        }
        let span = (steps - 1) as f64;
        let betas = (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / span)
            .collect();
        Self::from_betas(betas)
    }

    /// Linear schedule with the default endpoints (1e-4, 0.02) and `T = 2000`.
    pub fn default_linear() -> Self {
        Self::linear(DEFAULT_T, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule parameters are valid")
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 {
            return Err(Error::Parameter("schedule needs at least 2 steps".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::Parameter(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        let posterior_var = (0..betas.len())
            .map(|i| {
                let prev = if i == 0 { 1.0 } else { alpha_bars[i - 1] };
                ((1.0 - prev) / (1.0 - alpha_bars[i]) * betas[i]).max(0.0)
            })
            .collect();
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
            posterior_var,
        })
    }

    /// Number of diffusion steps `T`.
    pub fn num_steps(&self) -> usize {
        self.betas.len()
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.num_steps() {
            return Err(Error::Parameter(format!(
                "timestep {t} outside [1, {}]",
                self.num_steps()
            )));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// ᾱ_t, with ᾱ_0 = 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Posterior variance σ_t² = (1 − ᾱ_{t−1}) / (1 − ᾱ_t) · β_t.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.posterior_var[t - 1]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.posterior_variance(t).sqrt()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// Coefficients `(c0, ct)` of the posterior mean `c0·x̂0 + ct·x_t`.
    pub fn posterior_coefficients(&self, t: usize) -> (f64, f64) {
        let ab = self.alpha_bar(t);
        let ab_prev = self.alpha_bar(t - 1);
        let denom = 1.0 - ab;
        (
            ab_prev.sqrt() * self.beta(t) / denom,
            self.alpha(t).sqrt() * (1.0 - ab_prev) / denom,
        )
    }

    /// √ᾱ_t·x0 + √(1−ᾱ_t)·eps
    pub fn forward_diffuse(&self, x0: &Image, t: usize, eps: &Image) -> Result<Image> {
        self.check_t(t)?;
        let ab = self.alpha_bar(t);
        x0.lincomb(ab.sqrt(), eps, (1.0 - ab).sqrt())
    }

    /// One-step clean estimate (x_t − √(1−ᾱ_t)·ε̂) / √ᾱ_t.
    pub fn predict_x0_from_eps(&self, x_t: &Image, t: usize, eps_hat: &Image) -> Result<Image> {
        self.check_t(t)?;
        let ab = self.alpha_bar(t);
        let s = ab.sqrt();
        x_t.lincomb(1.0 / s, eps_hat, -(1.0 - ab).sqrt() / s)
    }

    /// ε implied by an (x_t, x̂0) pair; inverse of [`Self::predict_x0_from_eps`].
    pub fn eps_from_x0(&self, x_t: &Image, t: usize, x0_hat: &Image) -> Result<Image> {
        self.check_t(t)?;
        let ab = self.alpha_bar(t);
        let s = (1.0 - ab).sqrt();
        x_t.lincomb(1.0 / s, x0_hat, -ab.sqrt() / s)
    }

    /// Deterministic part of the DDPM reverse step: the posterior mean.
    pub fn posterior_mean(&self, x_t: &Image, x0_hat: &Image, t: usize) -> Result<Image> {
        self.check_t(t)?;
        let (c0, ct) = self.posterior_coefficients(t);
        x0_hat.lincomb(c0, x_t, ct)
    }

    /// x_{t−1} = c0·x̂0 + ct·x_t + σ_t·noise. At `t = 1` the noise is ignored.
    pub fn ddpm_step(&self, x_t: &Image, x0_hat: &Image, t: usize, noise: &Image) -> Result<Image> {
        let mut out = self.posterior_mean(x_t, x0_hat, t)?;
        x_t.ensure_same_shape(noise)?;
        if t > 1 {
            let sigma = self.sigma(t);
            for (o, n) in out.pixels_mut().iter_mut().zip(noise.pixels()) {
                *o += sigma * n;
            }
        }
        Ok(out)
    }

    /// DDIM noise scale for a jump from `t` to `t_prev < t` at η = 1.
    pub fn ddim_sigma(&self, t: usize, t_prev: usize) -> f64 {
        let ab = self.alpha_bar(t);
        let ab_prev = self.alpha_bar(t_prev);
        (((1.0 - ab_prev) / (1.0 - ab)) * (1.0 - ab / ab_prev)).max(0.0).sqrt()
    }

    /// DDIM jump from `subsequence[step_index]` to the preceding element
    /// (or to t = 0 for the first element).
    ///
    /// x' = √ᾱ'·x̂0 + √(1 − ᾱ' − σ̃²)·ε̂ + σ̃·noise, σ̃ = η·σ_DDIM.
    #[allow(clippy::too_many_arguments)]
    pub fn ddim_step(
        &self,
        subsequence: &TimestepSubsequence,
        x0_hat: &Image,
        eps_hat: &Image,
        step_index: usize,
        eta: f64,
        noise: &Image,
    ) -> Result<Image> {
        let (t, t_prev) = subsequence.transition(step_index)?;
        self.check_t(t)?;
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Parameter(format!("eta {eta} outside [0, 1]")));
        }
        x0_hat.ensure_same_shape(eps_hat)?;
        x0_hat.ensure_same_shape(noise)?;
        let ab_prev = self.alpha_bar(t_prev);
        let sigma = eta * self.ddim_sigma(t, t_prev);
        let dir = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
        let mut out = x0_hat.lincomb(ab_prev.sqrt(), eps_hat, dir)?;
        if sigma > 0.0 {
            for (o, n) in out.pixels_mut().iter_mut().zip(noise.pixels()) {
                *o += sigma * n;
            }
        }
        Ok(out)
    }
}

/// Strictly increasing subset of `1..=T` visited by an accelerated sampler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestepSubsequence {
    steps: Vec<usize>,
}

impl TimestepSubsequence {
    /// `count` steps with uniform stride, always ending at `total`.
    pub fn uniform(total: usize, count: usize) -> Result<Self> {
        if count == 0 || count > total {
            return Err(Error::Parameter(format!(
                "subsequence length {count} must be in [1, {total}]"
            )));
        }
        let steps = (1..=count).map(|k| k * total / count).collect();
        Self::from_steps(steps, total)
    }

    pub fn full(total: usize) -> Self {
        Self {
            steps: (1..=total).collect(),
        }
    }

    pub fn from_steps(steps: Vec<usize>, total: usize) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Parameter("empty timestep subsequence".into()));
        }
        if steps[0] == 0 || steps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter(
                "subsequence must be strictly increasing within [1, T]".into(),
            ));
        }
        if *steps.last().unwrap() != total {
            return Err(Error::Parameter(format!(
                "subsequence must end at T = {total}"
            )));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `(t, t_prev)` for a step index; `t_prev = 0` at index 0.
    pub fn transition(&self, step_index: usize) -> Result<(usize, usize)> {
        let t = *self.steps.get(step_index).ok_or_else(|| {
            Error::Parameter(format!(
                "step index {step_index} out of range for {} steps",
                self.steps.len()
            ))
        })?;
        let prev = if step_index == 0 {
            0
        } else {
            self.steps[step_index - 1]
        };
        Ok((t, prev))
    }
}
