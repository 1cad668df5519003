//! Command-line front end. `run` returns the process exit code:
//! 0 success, 1 other failure, 2 bad configuration, 3 I/O, 4 solver
//! non-convergence, 5 denoiser failure.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::denoiser::{ConditionImage, Denoiser, ExternalDenoiser, GaussianDenoiser, GaussianPrior};
use crate::error::{Error, Result};
use crate::image::{uniform_angles, Image};
use crate::io::{self, Geometry, OperatorKind};
use crate::metrics::{psnr, ssim_with_sigma, MetricSettings};
use crate::noise::seeded_rng;
use crate::nsmi::{calibrate_sigma_n, compute_gamma_phi, discrepancy_tolerance};
use crate::operators::{fbp_reconstruct, Filter, MeasurementOperator, RadonOperator, SolverOptions};
use crate::phantom::{family, make_condition_pair, random_phantom, shepp_logan, PhantomSpec};
use crate::sampler::{noisy_measurement, reverse_sample, Mode, SamplerConfig, Stepper, Summary};
use crate::schedule::{NoiseSchedule, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_DDIM_STEPS, DEFAULT_T};

pub const ENDPOINT_ENV: &str = "NSMI_DENOISER_ENDPOINT";

#[derive(Debug, Parser)]
#[command(name = "nsmi", version, about = "Diffusion-based sparse-view CT reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a Shepp-Logan phantom (randomized when --seed is given).
    Phantom(PhantomArgs),
    /// Simulate a sinogram, optionally with Gaussian noise.
    Project(ProjectArgs),
    /// Reconstruct an image from a sinogram.
    Reconstruct(ReconstructArgs),
    /// PSNR/SSIM of one or more reconstructions against a ground truth.
    Evaluate(EvaluateArgs),
    /// Print the per-step schedule and noisy-mode coefficients.
    ScheduleDump(ScheduleArgs),
    /// Run a reference denoiser server speaking the wire protocol.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Also write a synthetic guidance image derived from the phantom.
    #[arg(long)]
    pub condition: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeometryArg {
    Radon,
    Identity,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long, default_value_t = 23)]
    pub angles: usize,
    /// Detector count; defaults to the image diagonal.
    #[arg(long)]
    pub detectors: Option<usize>,
    #[arg(long, value_enum, default_value_t = GeometryArg::Radon)]
    pub geometry: GeometryArg,
    #[arg(long, default_value_t = 0.0)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fbp,
    Pinv,
    #[default]
    Ddmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DenoiserKind {
    #[default]
    Gaussian,
    External,
}

/// Every reconstruction setting. Loaded from `--config` (unknown keys are
/// rejected), then overridden by explicit flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub method: Method,
    pub mode: Mode,
    pub stepper: Stepper,
    pub ddim_steps: usize,
    pub eta: f64,
    /// Image-domain noise std for noisy mode; calibrated from
    /// `measurement_noise` when absent.
    pub sigma_n: Option<f64>,
    pub seed: u64,
    #[serde(rename = "T")]
    pub num_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Known sinogram noise std. Switches the solver to the discrepancy
    /// tolerance.
    pub measurement_noise: Option<f64>,
    pub filter: Filter,
    pub denoiser: DenoiserKind,
    pub endpoint: Option<String>,
    pub timeout_secs: f64,
    pub prior_samples: usize,
    pub prior_seed: u64,
    pub prior_variance_floor: f64,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub condition: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let solver = SolverOptions::default();
        Self {
            method: Method::Ddmm,
            mode: Mode::Noiseless,
            stepper: Stepper::Ddim,
            ddim_steps: DEFAULT_DDIM_STEPS,
            eta: 0.0,
            sigma_n: None,
            seed: 0,
            num_steps: DEFAULT_T,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
            tol: solver.tol,
            max_iter: solver.max_iter,
            measurement_noise: None,
            filter: Filter::RamLak,
            denoiser: DenoiserKind::Gaussian,
            endpoint: None,
            timeout_secs: 60.0,
            prior_samples: 200,
            prior_seed: 1000,
            prior_variance_floor: 1e-3,
            input: None,
            output: None,
            condition: None,
            trace: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// JSON experiment config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, value_enum)]
    pub stepper: Option<Stepper>,
    /// DDIM subsequence length.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long = "T")]
    pub num_steps: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub sigma_n: Option<f64>,
    #[arg(long)]
    pub measurement_noise: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub filter: Option<Filter>,
    #[arg(long, value_enum)]
    pub denoiser: Option<DenoiserKind>,
    #[arg(long, env = ENDPOINT_ENV)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub condition: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Write the per-step residual trace as JSON.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub truth: PathBuf,
    /// One file per seed; the table reports mean±std.
    #[arg(long, required = true, num_args = 1..)]
    pub recon: Vec<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub data_range: f64,
    /// Write the table as JSON as well.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long = "T", default_value_t = DEFAULT_T)]
    pub num_steps: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sigma_n: f64,
    #[arg(long, default_value_t = DEFAULT_BETA_START)]
    pub beta_start: f64,
    #[arg(long, default_value_t = DEFAULT_BETA_END)]
    pub beta_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StubModel {
    /// ε̂ = 0.
    Zero,
    /// ε̂ = x_t.
    Echo,
    /// Exact MMSE prediction under the phantom-family Gaussian prior.
    Gaussian,
    /// Every request gets an error response.
    Fail,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// `host:port` or `unix:/path`; omit to serve a single session on
    /// stdin/stdout.
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long, value_enum, default_value_t = StubModel::Gaussian)]
    pub model: StubModel,
    /// Exit after the first connection closes.
    #[arg(long)]
    pub once: bool,
    #[arg(long = "T", default_value_t = DEFAULT_T)]
    pub num_steps: usize,
    #[arg(long, default_value_t = 200)]
    pub prior_samples: usize,
    #[arg(long, default_value_t = 1000)]
    pub prior_seed: u64,
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Config(_) | Error::Parameter(_) | Error::ShapeMismatch { .. } => 2,
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::Convergence { .. } => 4,
        Error::Denoiser { .. } => 5,
        Error::Aborted { .. } => 1,
    }
}

/// Parses `args` (including the program name) and runs the command,
/// writing normal output to `out`.
pub fn run<I, T>(args: I, out: &mut dyn std::io::Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(command: Command, out: &mut dyn std::io::Write) -> Result<()> {
    let text = match command {
        Command::Phantom(a) => cmd_phantom(&a)?,
        Command::Project(a) => cmd_project(&a)?,
        Command::Reconstruct(a) => cmd_reconstruct(&a)?,
        Command::Evaluate(a) => cmd_evaluate(&a)?,
        Command::ScheduleDump(a) => cmd_schedule_dump(&a)?,
        Command::Serve(a) => cmd_serve(&a)?,
    };
    out.write_all(text.as_bytes())
        .map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        })
}

fn cmd_phantom(a: &PhantomArgs) -> Result<String> {
    let img = match a.seed {
        Some(seed) => random_phantom(&PhantomSpec::randomized(a.size, seed))?,
        None => shepp_logan(a.size)?,
    };
    io::write_image(&a.output, &img)?;
    if let Some(path) = &a.condition {
        io::write_image(path, &make_condition_pair(&img, a.seed.unwrap_or(0)))?;
    }
    Ok(String::new())
}

fn cmd_project(a: &ProjectArgs) -> Result<String> {
    if !(a.noise_std >= 0.0) || !a.noise_std.is_finite() {
        return Err(Error::Config(format!("--noise-std must be >= 0, got {}", a.noise_std)));
    }
    let img = io::read_image(&a.input)?;
    let (h, w) = img.shape();
    let (op, operator): (Box<dyn MeasurementOperator>, _) = match a.geometry {
        GeometryArg::Identity => (
            Box::new(crate::operators::IdentityOperator::new(h, w)),
            OperatorKind::Identity,
        ),
        GeometryArg::Radon => {
            if h != w {
                return Err(Error::Config(format!("radon projection needs a square image, got {h}x{w}")));
            }
            let det = a.detectors.unwrap_or_else(|| RadonOperator::default_detectors(h));
            (
                Box::new(RadonOperator::with_angles(h, uniform_angles(a.angles), det)?),
                OperatorKind::Radon,
            )
        }
    };
    let clean = op.apply(&img)?;
    let y = noisy_measurement(&clean, a.noise_std, a.seed);
    io::write_sinogram(
        &a.output,
        &y,
        &Geometry {
            operator,
            image_shape: (h, w),
        },
    )?;
    Ok(String::new())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn apply_flags(&mut self, a: &ReconstructArgs) {
        macro_rules! set {
            ($($field:ident <- $flag:ident),* $(,)?) => {
                $(if let Some(v) = a.$flag.clone() { self.$field = v; })*
            };
        }
        set!(
            method <- method, mode <- mode, stepper <- stepper, ddim_steps <- steps,
            num_steps <- num_steps, eta <- eta, tol <- tol, max_iter <- max_iter,
            filter <- filter, denoiser <- denoiser, seed <- seed,
        );
        macro_rules! set_opt {
            ($($field:ident),*) => { $(if a.$field.is_some() { self.$field = a.$field.clone(); })* };
        }
        set_opt!(sigma_n, measurement_noise, endpoint, input, output, condition, trace);
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.num_steps, self.beta_start, self.beta_end)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions::new(self.tol, self.max_iter)
    }

    pub fn validate(&self) -> Result<()> {
        let schedule = self.schedule()?;
        self.sampler(self.sigma_n.unwrap_or(1.0)).validate(&schedule)?;
        if let Some(s) = self.measurement_noise {
            if !(s > 0.0) {
                return Err(Error::Config(format!("measurement_noise must be > 0, got {s}")));
            }
        }
        if self.mode == Mode::Noisy && self.sigma_n.is_none() && self.measurement_noise.is_none() {
            return Err(Error::Config(
                "noisy mode needs sigma_n or measurement_noise to calibrate it".into(),
            ));
        }
        if self.denoiser == DenoiserKind::External && self.method == Method::Ddmm && self.endpoint.is_none() {
            return Err(Error::Config(format!(
                "external denoiser needs --endpoint or {ENDPOINT_ENV}"
            )));
        }
        if self.prior_samples == 0 || !(self.prior_variance_floor > 0.0) {
            return Err(Error::Config("prior_samples and prior_variance_floor must be positive".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(Error::Config("timeout_secs must be positive".into()));
        }
        if self.input.is_none() || self.output.is_none() {
            return Err(Error::Config("input and output paths are required".into()));
        }
        Ok(())
    }

    fn sampler(&self, sigma_n: f64) -> SamplerConfig {
        SamplerConfig {
            mode: self.mode,
            stepper: self.stepper,
            ddim_steps: self.ddim_steps,
            eta: self.eta,
            sigma_n: if self.mode == Mode::Noisy { sigma_n } else { 0.0 },
            seed: self.seed,
            solver: self.solver(),
            record_trace: self.trace.is_some(),
        }
    }
}

fn cmd_reconstruct(a: &ReconstructArgs) -> Result<String> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_flags(a);
    cfg.validate()?;
    let input = cfg.input.clone().expect("validated");
    let output = cfg.output.clone().expect("validated");
    let (y, geometry) = io::read_sinogram(&input)?;
    let op = geometry.build(&y)?;
    let (h, w) = geometry.image_shape;

    let mut solver = cfg.solver();
    if let Some(s) = cfg.measurement_noise {
        solver.tol = discrepancy_tolerance(&y, s)?;
    }

    let image = match cfg.method {
        Method::Fbp => {
            if geometry.operator != OperatorKind::Radon {
                return Err(Error::Config("fbp needs a radon sinogram".into()));
            }
            let radon = RadonOperator::with_angles(h, y.angles().to_vec(), y.n_detectors())?;
            fbp_reconstruct(&radon, &y, cfg.filter)?
        }
        Method::Pinv => op.pinv_apply(&y, &solver)?.clamped(),
        Method::Ddmm => {
            let schedule = Arc::new(cfg.schedule()?);
            let condition = match &cfg.condition {
                Some(p) => Some(ConditionImage::new(io::read_image(p)?)),
                None => None,
            };
            // the prior is fitted to randomized phantoms of the output size
            let prior = || -> Result<GaussianPrior> {
                if h != w {
                    return Err(Error::Config("the gaussian prior needs a square image".into()));
                }
                GaussianPrior::fit(&family(h, cfg.prior_samples, cfg.prior_seed)?, cfg.prior_variance_floor)
            };
            let sigma_n = match (cfg.mode, cfg.sigma_n, cfg.measurement_noise) {
                (Mode::Noisy, None, Some(noise)) => {
                    let reference = prior()?.mean().clone();
                    let mut rng = seeded_rng(cfg.seed ^ 0xca11_b7a7e);
                    calibrate_sigma_n(op.as_ref(), &reference, noise, 4, &solver, &mut rng)?
                }
                (_, s, _) => s.unwrap_or(0.0),
            };
            let mut sampler = cfg.sampler(sigma_n);
            sampler.solver = solver;
            let mut denoiser: Box<dyn Denoiser> = match cfg.denoiser {
                DenoiserKind::Gaussian => Box::new(GaussianDenoiser::new(prior()?, schedule.clone())),
                DenoiserKind::External => {
                    let endpoint = cfg.endpoint.as_deref().expect("validated");
                    let timeout = Duration::from_secs_f64(cfg.timeout_secs);
                    Box::new(
                        ExternalDenoiser::connect(endpoint, Some(timeout))
                            .map_err(|source| Error::Denoiser { t: 0, source })?,
                    )
                }
            };
            let (x, trace) =
                reverse_sample(&schedule, op.as_ref(), &y, denoiser.as_mut(), condition.as_ref(), &sampler)?;
            if let Some(path) = &cfg.trace {
                let json = serde_json::to_string_pretty(&trace).expect("trace serializes");
                std::fs::write(path, json).map_err(|e| Error::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
            }
            x
        }
    };
    io::write_image(&output, &image)?;
    Ok(String::new())
}

#[derive(Debug, Serialize)]
struct EvaluationReport {
    settings: MetricSettings,
    files: Vec<PathBuf>,
    psnr: Summary,
    ssim: Summary,
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<String> {
    let settings = MetricSettings {
        data_range: a.data_range,
        ..MetricSettings::default()
    };
    let truth = io::read_image(&a.truth)?;
    let mut p = Vec::new();
    let mut s = Vec::new();
    let mut text = String::new();
    for path in &a.recon {
        let x: Image = io::read_image(path)?;
        let pv = psnr(&truth, &x, settings.data_range)?;
        let sv = ssim_with_sigma(&truth, &x, settings.ssim_window, settings.ssim_sigma, settings.data_range)?;
        writeln!(text, "{}\tPSNR {pv:.2} dB\tSSIM {sv:.4}", path.display()).expect("string write");
        p.push(pv);
        s.push(sv);
    }
    let report = EvaluationReport {
        settings,
        files: a.recon.clone(),
        psnr: Summary::of(p),
        ssim: Summary::of(s),
    };
    writeln!(
        text,
        "mean±std over {} file(s)\tPSNR {:.2} dB\tSSIM {:.4}\t(data range {}, SSIM window {} / sigma {})",
        a.recon.len(),
        report.psnr,
        report.ssim,
        settings.data_range,
        settings.ssim_window,
        settings.ssim_sigma
    )
    .expect("string write");
    if let Some(path) = &a.json {
        let mut f = std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        // infinite PSNR has no JSON number; serde_json writes null
        serde_json::to_writer_pretty(&mut f, &report)
            .map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e.into(),
            })?;
        f.write_all(b"\n").map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    Ok(text)
}

fn cmd_schedule_dump(a: &ScheduleArgs) -> Result<String> {
    let s = NoiseSchedule::linear(a.num_steps, a.beta_start, a.beta_end)
        .map_err(|e| Error::Config(e.to_string()))?;
    let p = compute_gamma_phi(&s, a.sigma_n).map_err(|e| Error::Config(e.to_string()))?;
    let mut text = String::from("t\tbeta\talpha_bar\tsigma\tgamma\tphi\n");
    for t in 1..=s.num_steps() {
        writeln!(
            text,
            "{t}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}",
            s.beta(t),
            s.alpha_bar(t),
            s.sigma(t),
            p.gamma(t),
            p.phi(t)
        )
        .expect("string write");
    }
    Ok(text)
}

struct StdioStream {
    stdin: std::io::Stdin,
    stdout: std::io::Stdout,
}

impl std::io::Read for StdioStream {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        self.stdin.read(buf)
    }
}

impl std::io::Write for StdioStream {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.stdout.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.stdout.flush()
    }
}

/// Request handler for the reference server models.
pub fn stub_model(
    model: StubModel,
    schedule: Arc<NoiseSchedule>,
    prior_samples: usize,
    prior_seed: u64,
) -> impl FnMut(&crate::denoiser::protocol::Request) -> std::result::Result<Vec<f32>, String> {
    let mut priors: std::collections::HashMap<(u32, u32), GaussianPrior> = Default::default();
    move |req| match model {
        StubModel::Zero => Ok(vec![0.0; req.pixel_count()]),
        StubModel::Echo => Ok(req.x_t.clone()),
        StubModel::Fail => Err("stub model configured to fail".into()),
        StubModel::Gaussian => {
            if req.height != req.width {
                return Err(format!("gaussian stub needs square images, got {}x{}", req.height, req.width));
            }
            let size = req.height as usize;
            let prior = match priors.entry((req.height, req.width)) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(v) => {
                    let samples = family(size, prior_samples, prior_seed).map_err(|e| e.to_string())?;
                    v.insert(GaussianPrior::fit(&samples, 1e-3).map_err(|e| e.to_string())?)
                }
            };
            let x = Image::new(size, size, req.x_t.iter().map(|&v| v as f64).collect())
                .map_err(|e| e.to_string())?;
            let eps = crate::denoiser::gaussian_predict_eps(prior, &schedule, &x, req.t as usize)
                .map_err(|e| e.to_string())?;
            Ok(eps.pixels().iter().map(|&v| v as f32).collect())
        }
    }
}

fn cmd_serve(a: &ServeArgs) -> Result<String> {
    let schedule = Arc::new(
        NoiseSchedule::linear(a.num_steps, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .map_err(|e| Error::Config(e.to_string()))?,
    );
    let mut model = stub_model(a.model, schedule, a.prior_samples, a.prior_seed);
    let denoiser_err = |source| Error::Denoiser { t: 0, source };
    let listen_err = |e: std::io::Error| Error::Io {
        path: a.listen.clone().unwrap_or_default(),
        source: e,
    };
    let Some(addr) = &a.listen else {
        let mut stdio = StdioStream {
            stdin: std::io::stdin(),
            stdout: std::io::stdout(),
        };
        crate::denoiser::serve(&mut stdio, &mut model).map_err(denoiser_err)?;
        return Ok(String::new());
    };
    #[cfg(unix)]
    if let Some(path) = addr.strip_prefix("unix:") {
        let listener = std::os::unix::net::UnixListener::bind(path).map_err(listen_err)?;
        for conn in listener.incoming() {
            let mut conn = conn.map_err(listen_err)?;
            if let Err(e) = crate::denoiser::serve(&mut conn, &mut model) {
                eprintln!("session ended: {e}");
            }
            if a.once {
                break;
            }
        }
        return Ok(String::new());
    }
    let listener =
        std::net::TcpListener::bind(addr.strip_prefix("tcp://").unwrap_or(addr)).map_err(listen_err)?;
    eprintln!("listening on {}", listener.local_addr().map_err(listen_err)?);
    for conn in listener.incoming() {
        let mut conn = conn.map_err(listen_err)?;
        if let Err(e) = crate::denoiser::serve(&mut conn, &mut model) {
            eprintln!("session ended: {e}");
        }
        if a.once {
            break;
        }
    }
    Ok(String::new())
}
