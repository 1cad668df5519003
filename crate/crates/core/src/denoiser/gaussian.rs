use std::sync::Arc;

use super::{ConditionImage, Denoiser, DenoiserError};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::schedule::NoiseSchedule;

/// Independent per-pixel Gaussian prior `x0 ~ N(mean, diag(variance))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    mean: Image,
    variance: Image,
}

impl GaussianPrior {
    pub fn new(mean: Image, variance: Image) -> Result<Self> {
        mean.ensure_same_shape(&variance)?;
        if let Some(v) = variance.pixels().iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Parameter(format!(
                "prior variance must be strictly positive, found {v}"
            )));
        }
        Ok(Self { mean, variance })
    }

    /// Pixelwise sample mean and variance of `samples`, with the variance
    /// floored at `variance_floor`.
    pub fn fit(samples: &[Image], variance_floor: f64) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Parameter("cannot fit a prior to zero samples".into()))?;
        if !(variance_floor > 0.0) {
            return Err(Error::Parameter("variance floor must be positive".into()));
        }
        let n = samples.len() as f64;
        let mut mean = vec![0.0; first.len()];
        for s in samples {
            first.ensure_same_shape(s)?;
            mean.iter_mut().zip(s.pixels()).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; first.len()];
        for s in samples {
            var.iter_mut()
                .zip(s.pixels())
                .zip(&mean)
                .for_each(|((acc, v), m)| *acc += (v - m) * (v - m) / n);
        }
        var.iter_mut().for_each(|v| *v = v.max(variance_floor));
        Self::new(first.like(mean), first.like(var))
    }

    pub fn mean(&self) -> &Image {
        &self.mean
    }

    pub fn variance(&self) -> &Image {
        &self.variance
    }

    /// E[x0 | x_t] = (√ᾱ·v·x_t + (1−ᾱ)·μ) / (ᾱ·v + 1 − ᾱ).
    pub fn posterior_mean(&self, schedule: &NoiseSchedule, x_t: &Image, t: usize) -> Result<Image> {
        self.mean.ensure_same_shape(x_t)?;
        if t == 0 || t > schedule.num_steps() {
            return Err(Error::Parameter(format!("timestep {t} out of range")));
        }
        let ab = schedule.alpha_bar(t);
        let s = ab.sqrt();
        let pixels = x_t
            .pixels()
            .iter()
            .zip(self.mean.pixels())
            .zip(self.variance.pixels())
            .map(|((&x, &mu), &v)| (s * v * x + (1.0 - ab) * mu) / (ab * v + 1.0 - ab))
            .collect();
        Ok(x_t.like(pixels))
    }
}

/// Exact MMSE noise prediction under a Gaussian prior:
/// ε̂ = (x_t − √ᾱ_t·E[x0|x_t]) / √(1−ᾱ_t).
pub fn gaussian_predict_eps(
    prior: &GaussianPrior,
    schedule: &NoiseSchedule,
    x_t: &Image,
    t: usize,
) -> Result<Image> {
    let x0 = prior.posterior_mean(schedule, x_t, t)?;
    schedule.eps_from_x0(x_t, t, &x0)
}

/// [`Denoiser`] backed by [`gaussian_predict_eps`]; ignores the condition.
#[derive(Debug, Clone)]
pub struct GaussianDenoiser {
    prior: GaussianPrior,
    schedule: Arc<NoiseSchedule>,
}

impl GaussianDenoiser {
    pub fn new(prior: GaussianPrior, schedule: Arc<NoiseSchedule>) -> Self {
        Self { prior, schedule }
    }

    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }
}

impl Denoiser for GaussianDenoiser {
    fn predict_eps(
        &mut self,
        x_t: &Image,
        t: usize,
        _condition: Option<&ConditionImage>,
    ) -> std::result::Result<Image, DenoiserError> {
        gaussian_predict_eps(&self.prior, &self.schedule, x_t, t).map_err(|e| match e {
            Error::ShapeMismatch { expected, found } => {
                DenoiserError::ShapeMismatch { expected, found }
            }
            other => DenoiserError::Remote(other.to_string()),
        })
    }
}
