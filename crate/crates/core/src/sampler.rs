//! The reverse sampling loop: x_T ~ N(0, I), then per step denoise, refine
//! against the measurement, and step to the next iterate.
//!
//! RNG draw order for one run, all from a single generator seeded with
//! `config.seed`:
//! 1. x_T, one image of standard normals.
//! 2. For every executed step that adds noise, the step noise. DDPM draws
//!    one image per step with t > 1; noisy mode draws ε_measure then ε_extra
//!    (see [`step_noisy`]); DDIM draws one image when η·σ_DDIM > 0.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::denoiser::{ConditionImage, Denoiser};
use crate::error::{Error, Result};
use crate::image::{Image, Sinogram};
use crate::noise::{seeded_rng, standard_normal, SamplerRng};
use crate::nsmi::{compute_gamma_phi, step_noisy, NoisyNsmiParams, RangeCorrector};
use crate::operators::{MeasurementOperator, SolverOptions};
use crate::schedule::{NoiseSchedule, TimestepSubsequence, DEFAULT_DDIM_STEPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Noiseless,
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Stepper {
    Ddpm,
    #[default]
    Ddim,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Noiseless => "noiseless",
            Mode::Noisy => "noisy",
        })
    }
}

impl fmt::Display for Stepper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stepper::Ddpm => "ddpm",
            Stepper::Ddim => "ddim",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub mode: Mode,
    pub stepper: Stepper,
    pub ddim_steps: usize,
    pub eta: f64,
    /// Image-domain measurement noise std; noisy mode only.
    pub sigma_n: f64,
    pub seed: u64,
    pub solver: SolverOptions,
    pub record_trace: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Noiseless,
            stepper: Stepper::Ddim,
            ddim_steps: DEFAULT_DDIM_STEPS,
            eta: 0.0,
            sigma_n: 0.0,
            seed: 0,
            solver: SolverOptions::default(),
            record_trace: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, schedule: &NoiseSchedule) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.mode == Mode::Noisy {
            if !(self.sigma_n > 0.0) || !self.sigma_n.is_finite() {
                return bad(format!("noisy mode needs sigma_n > 0, got {}", self.sigma_n));
            }
            if self.stepper == Stepper::Ddim {
                return bad("noisy mode is only defined for the ddpm stepper".into());
            }
        }
        if self.stepper == Stepper::Ddim {
            if self.ddim_steps == 0 || self.ddim_steps > schedule.num_steps() {
                return bad(format!(
                    "ddim_steps must be in 1..={}, got {}",
                    schedule.num_steps(),
                    self.ddim_steps
                ));
            }
            if !(0.0..=1.0).contains(&self.eta) {
                return bad(format!("eta must be in [0, 1], got {}", self.eta));
            }
        }
        self.solver
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Timesteps visited, in execution order (descending).
    pub fn timesteps(&self, schedule: &NoiseSchedule) -> Result<Vec<usize>> {
        let seq = self.subsequence(schedule)?;
        Ok(seq.steps().iter().rev().copied().collect())
    }

    fn subsequence(&self, schedule: &NoiseSchedule) -> Result<TimestepSubsequence> {
        match self.stepper {
            Stepper::Ddpm => Ok(TimestepSubsequence::full(schedule.num_steps())),
            Stepper::Ddim => TimestepSubsequence::uniform(schedule.num_steps(), self.ddim_steps),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub t: usize,
    /// ‖A x̂0|t − y‖ / ‖y‖ after refinement (absolute if y = 0).
    pub residual: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SampleTrace {
    /// Descending in t; empty unless tracing was requested.
    pub steps: Vec<TraceEntry>,
    /// Relative residual of the output before clamping.
    pub final_residual: f64,
    pub seconds: f64,
}

impl SampleTrace {
    pub fn max_residual(&self) -> f64 {
        self.steps.iter().map(|s| s.residual).fold(0.0, f64::max)
    }
}

fn relative_residual(op: &dyn MeasurementOperator, x: &Image, y: &Sinogram) -> Result<f64> {
    let r = op.apply(x)?.sub(y)?.norm();
    let yn = y.norm();
    Ok(if yn > 0.0 { r / yn } else { r })
}

/// Runs the full reverse chain and returns the clamped reconstruction.
///
/// Any failure inside a step is wrapped in [`Error::Aborted`] carrying the
/// 0-based step index and its timestep.
pub fn reverse_sample(
    schedule: &NoiseSchedule,
    op: &dyn MeasurementOperator,
    y: &Sinogram,
    denoiser: &mut dyn Denoiser,
    condition: Option<&ConditionImage>,
    config: &SamplerConfig,
) -> Result<(Image, SampleTrace)> {
    let (x, trace) = reverse_sample_raw(schedule, op, y, denoiser, condition, config)?;
    Ok((x.clamped(), trace))
}

/// [`reverse_sample`] without the final clamp.
pub fn reverse_sample_raw(
    schedule: &NoiseSchedule,
    op: &dyn MeasurementOperator,
    y: &Sinogram,
    denoiser: &mut dyn Denoiser,
    condition: Option<&ConditionImage>,
    config: &SamplerConfig,
) -> Result<(Image, SampleTrace)> {
    config.validate(schedule)?;
    let (h, w) = op.image_shape();
    if y.shape() != op.measurement_shape() {
        return Err(Error::shape(
            format!("{:?}", op.measurement_shape()),
            format!("{:?}", y.shape()),
        ));
    }
    if let Some(c) = condition {
        if c.image().shape() != (h, w) {
            return Err(Error::shape(format!("{:?}", (h, w)), format!("{:?}", c.image().shape())));
        }
    }
    let params = match config.mode {
        Mode::Noisy => Some(compute_gamma_phi(schedule, config.sigma_n)?),
        Mode::Noiseless => None,
    };
    let seq = config.subsequence(schedule)?;
    let start = Instant::now();
    let mut rng = seeded_rng(config.seed);
    let mut x = standard_normal(&mut rng, w, h);
    let mut trace = SampleTrace::default();
    let mut corrector = RangeCorrector::new(config.solver);

    let ctx = StepContext {
        schedule,
        op,
        y,
        condition,
        config,
        params: params.as_ref(),
        seq: &seq,
    };
    for (step, index) in (0..seq.len()).rev().enumerate() {
        let (t, _) = seq.transition(index)?;
        let t0 = Instant::now();
        let (next, refined) = ctx
            .step(&mut *denoiser, &mut corrector, &x, index, &mut rng)
            .map_err(|e| Error::Aborted {
                step,
                t,
                source: Box::new(e),
            })?;
        if config.record_trace {
            trace.steps.push(TraceEntry {
                t,
                residual: relative_residual(op, &refined, y)?,
                seconds: t0.elapsed().as_secs_f64(),
            });
        }
        x = next;
    }
    trace.final_residual = relative_residual(op, &x, y)?;
    trace.seconds = start.elapsed().as_secs_f64();
    Ok((x, trace))
}

struct StepContext<'a> {
    schedule: &'a NoiseSchedule,
    op: &'a dyn MeasurementOperator,
    y: &'a Sinogram,
    condition: Option<&'a ConditionImage>,
    config: &'a SamplerConfig,
    params: Option<&'a NoisyNsmiParams>,
    seq: &'a TimestepSubsequence,
}

impl StepContext<'_> {
    /// Returns the next iterate and the refined x̂0|t.
    fn step(
        &self,
        denoiser: &mut dyn Denoiser,
        corrector: &mut RangeCorrector,
        x: &Image,
        index: usize,
        rng: &mut SamplerRng,
    ) -> Result<(Image, Image)> {
        let s = self.schedule;
        let (t, t_prev) = self.seq.transition(index)?;
        let eps = denoiser
            .predict_eps(x, t, self.condition)
            .map_err(|source| Error::Denoiser { t, source })?;
        if eps.shape() != x.shape() {
            return Err(Error::shape(format!("{:?}", x.shape()), format!("{:?}", eps.shape())));
        }
        let x0 = s.predict_x0_from_eps(x, t, &eps)?;
        let gamma = self.params.map_or(1.0, |p| p.gamma(t));
        let refined = corrector.refine(self.op, &x0, self.y, gamma)?;
        let next = match (self.config.stepper, self.params) {
            (Stepper::Ddpm, Some(p)) => step_noisy(s, p, x, &refined, t, rng)?,
            (Stepper::Ddpm, None) => {
                let noise = if t > 1 {
                    standard_normal(rng, x.width(), x.height())
                } else {
                    Image::zeros(x.width(), x.height())
                };
                s.ddpm_step(x, &refined, t, &noise)?
            }
            (Stepper::Ddim, _) => {
                // the direction term uses the ε consistent with the refined x̂0
                let eps_refined = s.eps_from_x0(x, t, &refined)?;
                let noise = if self.config.eta * s.ddim_sigma(t, t_prev) > 0.0 {
                    standard_normal(rng, x.width(), x.height())
                } else {
                    Image::zeros(x.width(), x.height())
                };
                s.ddim_step(self.seq, &refined, &eps_refined, index, self.config.eta, &noise)?
            }
        };
        Ok((next, refined))
    }
}

/// Mean and sample standard deviation of per-seed values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl Summary {
    pub fn of(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        // all-equal covers the all-infinite PSNR case
        let std = if values.iter().all(|v| *v == values[0]) {
            0.0
        } else if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std, values }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = f.precision().unwrap_or(2);
        write!(f, "{:.p$}±{:.p$}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub label: String,
    pub psnr: Summary,
    pub ssim: Summary,
    pub residual: Summary,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsTable {
    pub settings: crate::metrics::MetricSettings,
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn row(&self, label: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

impl fmt::Display for MetricsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
        writeln!(f, "{:<width$}  {:>14}  {:>13}  seeds", "case", "PSNR (dB)", "SSIM")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<width$}  {:>14}  {:>13}  {}",
                r.label,
                format!("{:.2}", r.psnr),
                format!("{:.4}", r.ssim),
                r.seeds.len()
            )?;
        }
        write!(
            f,
            "(data range {}, SSIM window {} / sigma {})",
            self.settings.data_range, self.settings.ssim_window, self.settings.ssim_sigma
        )
    }
}

/// One row of a sweep. Each seed adds fresh N(0, noise_std²) noise to
/// `clean` (paired across cases that share a seed).
pub struct Case<'a> {
    pub label: String,
    pub truth: &'a Image,
    pub op: &'a dyn MeasurementOperator,
    pub clean: &'a Sinogram,
    pub noise_std: f64,
    pub condition: Option<&'a ConditionImage>,
    pub schedule: &'a NoiseSchedule,
    pub config: SamplerConfig,
}

/// Offset separating the measurement-noise stream from the sampler stream.
const MEASUREMENT_STREAM: u64 = 0x6d65_6173_7572_6500;

/// The measurement used for seed `seed`: `clean + noise_std·g`.
pub fn noisy_measurement(clean: &Sinogram, noise_std: f64, seed: u64) -> Sinogram {
    if noise_std == 0.0 {
        return clean.clone();
    }
    let mut rng = seeded_rng(seed ^ MEASUREMENT_STREAM);
    let g = crate::noise::standard_normal_vec(&mut rng, clean.values().len());
    clean.like(
        clean
            .values()
            .iter()
            .zip(g)
            .map(|(v, n)| v + noise_std * n)
            .collect(),
    )
}

/// Runs every case for seeds `root_seed + i`, `i < n_seeds`, in parallel.
///
/// `make_denoiser` is called once per run so runs never share a connection.
/// Results do not depend on scheduling.
pub fn run_repeated<F>(
    cases: &[Case<'_>],
    n_seeds: usize,
    root_seed: u64,
    make_denoiser: F,
) -> Result<MetricsTable>
where
    F: Fn(&Case<'_>) -> Result<Box<dyn Denoiser + Send>> + Sync,
{
    use rayon::prelude::*;

    if n_seeds == 0 {
        return Err(Error::Config("n_seeds must be at least 1".into()));
    }
    let settings = crate::metrics::MetricSettings::default();
    let jobs: Vec<(usize, u64)> = (0..cases.len())
        .flat_map(|c| (0..n_seeds as u64).map(move |i| (c, root_seed.wrapping_add(i))))
        .collect();
    let results: Vec<Result<(f64, f64, f64)>> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let case = &cases[c];
            let y = noisy_measurement(case.clean, case.noise_std, seed);
            let mut denoiser = make_denoiser(case)?;
            let config = SamplerConfig { seed, ..case.config };
            let (x, trace) =
                reverse_sample(case.schedule, case.op, &y, denoiser.as_mut(), case.condition, &config)?;
            let p = crate::metrics::psnr(case.truth, &x, settings.data_range)?;
            let s = crate::metrics::ssim_with_sigma(
                case.truth,
                &x,
                settings.ssim_window,
                settings.ssim_sigma,
                settings.data_range,
            )?;
            Ok((p, s, trace.final_residual))
        })
        .collect();

    let mut results = results.into_iter();
    let mut rows = Vec::with_capacity(cases.len());
    for case in cases {
        let mut psnr = Vec::with_capacity(n_seeds);
        let mut ssim = Vec::with_capacity(n_seeds);
        let mut residual = Vec::with_capacity(n_seeds);
        for _ in 0..n_seeds {
            let (p, s, r) = results.next().expect("one result per job")?;
            psnr.push(p);
            ssim.push(s);
            residual.push(r);
        }
        rows.push(MetricsRow {
            label: case.label.clone(),
            psnr: Summary::of(psnr),
            ssim: Summary::of(ssim),
            residual: Summary::of(residual),
            seeds: (0..n_seeds as u64).map(|i| root_seed.wrapping_add(i)).collect(),
        });
    }
    Ok(MetricsTable { settings, rows })
}
