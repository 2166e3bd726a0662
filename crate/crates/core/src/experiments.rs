//! Monte Carlo estimation of strong and weak quadrature errors.
//!
//! For every `n` in the configuration, `M` replicates are drawn. Replicate
//! `j` at step count `n` reads its trajectories from the streams keyed by
//! `(seed, (n << 32) | j)`, so each `n` gets fresh paths while the whole
//! experiment hangs off one master seed. Per-replicate results are collected
//! in replicate order and reduced sequentially, which makes every estimate
//! independent of the worker count.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrands::{deserialize_integrand, payoff, Integrand};
use crate::noise::{w_perturbation, x_perturbation, BoundBranch, NoiseSpec};
use crate::paths::{BundleSpec, Mesh, TrajectoryBundle, DEFAULT_FINE_CAP};
use crate::quadrature::{accumulate_noisy_rm, accumulate_rm_with, CompensatedSum, NoisySeries};
use crate::rng;
use crate::stats;

pub const DEFAULT_REPLICATES: usize = 2048;
pub const DEFAULT_L_REF: usize = 1000;
pub const DEFAULT_BOOTSTRAP: usize = 500;
pub const DEFAULT_SEED: u64 = 20_190_612;
pub const DEFAULT_STRIKE_WEAK: f64 = 2.0;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "NOISY_ITO_THREADS";

/// How precision levels depend on `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaCoupling {
    /// Use the configured `delta1`, `delta2` for every `n`.
    #[default]
    None,
    /// `delta1 = delta2 = n^(-1/2)`.
    InvSqrtN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(deserialize_with = "deserialize_integrand")]
    pub problem: Integrand,
    pub n_list: Vec<usize>,
    #[serde(default = "default_replicates", alias = "M")]
    pub replicates: usize,
    #[serde(default = "default_l_ref", alias = "L_ref")]
    pub l_ref: usize,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_horizon", alias = "T")]
    pub horizon: f64,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default)]
    pub delta_coupling: DeltaCoupling,
    #[serde(default = "default_fine_cap")]
    pub fine_cap: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
    /// Worker count. Never part of the echo: results do not depend on it.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
}

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}
fn default_l_ref() -> usize {
    DEFAULT_L_REF
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_horizon() -> f64 {
    1.0
}
fn default_r() -> f64 {
    2.0
}
fn default_fine_cap() -> usize {
    DEFAULT_FINE_CAP
}
fn default_bootstrap() -> usize {
    DEFAULT_BOOTSTRAP
}

/// `4, 8, ..., 4096`.
pub fn default_n_list() -> Vec<usize> {
    (2..=12).map(|k| 1usize << k).collect()
}

/// `4, 8, ..., 256`, for runs against a 1000x reference mesh.
pub fn default_reference_n_list() -> Vec<usize> {
    (2..=8).map(|k| 1usize << k).collect()
}

/// Worker count from the environment, else the machine's parallelism.
pub fn default_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

impl ExperimentConfig {
    pub fn new(problem: Integrand, n_list: Vec<usize>) -> Self {
        Self {
            problem,
            n_list,
            replicates: DEFAULT_REPLICATES,
            l_ref: DEFAULT_L_REF,
            noise: NoiseSpec::exact(),
            seed: DEFAULT_SEED,
            horizon: 1.0,
            r: 2.0,
            delta_coupling: DeltaCoupling::None,
            fine_cap: DEFAULT_FINE_CAP,
            bootstrap_resamples: DEFAULT_BOOTSTRAP,
            threads: None,
        }
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_replicates(mut self, m: usize) -> Self {
        self.replicates = m;
        self
    }

    pub fn with_l_ref(mut self, l_ref: usize) -> Self {
        self.l_ref = l_ref;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    pub fn with_coupling(mut self, coupling: DeltaCoupling) -> Self {
        self.delta_coupling = coupling;
        self
    }

    pub fn effective_threads(&self) -> usize {
        self.threads.unwrap_or_else(default_threads)
    }

    /// Noise actually applied at step count `n`.
    pub fn noise_for(&self, n: usize) -> NoiseSpec {
        match self.delta_coupling {
            DeltaCoupling::None => self.noise.clone(),
            DeltaCoupling::InvSqrtN => {
                let d = 1.0 / (n as f64).sqrt();
                self.noise.with_deltas(d, d)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.noise.validate()?;
        if self.n_list.is_empty() {
            return Err(Error::Config("n_list must not be empty".into()));
        }
        if self.n_list[0] == 0 {
            return Err(Error::Config("n_list entries must be positive".into()));
        }
        if let Some(w) = self.n_list.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "n_list must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if self.replicates < 2 {
            return Err(Error::Config(format!(
                "need at least 2 replicates, got {}",
                self.replicates
            )));
        }
        if self.replicates > u32::MAX as usize || *self.n_list.last().unwrap() > u32::MAX as usize {
            return Err(Error::Config("replicates and n must fit in 32 bits".into()));
        }
        if self.l_ref == 0 {
            return Err(Error::Config("l_ref must be positive".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.r >= 2.0 && self.r.is_finite()) {
            return Err(Error::Config(format!(
                "r must be at least 2, got {}",
                self.r
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        let n_max = *self.n_list.last().unwrap();
        match n_max.checked_mul(self.l_ref) {
            Some(fine) if fine <= self.fine_cap => Ok(()),
            _ => Err(Error::Resource(format!(
                "fine grid n * l_ref = {n_max} * {} exceeds the cap of {} steps",
                self.l_ref, self.fine_cap
            ))),
        }
    }

    /// Copy for report echoes: everything that determines the numbers.
    fn echo(&self) -> Self {
        Self {
            threads: None,
            ..self.clone()
        }
    }
}

/// How the error column was estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    /// Root-mean moment against the closed-form integral.
    StrongExact,
    /// Root-mean moment against the exact-information quadrature on the
    /// `l_ref`-times finer mesh of the same trajectory.
    StrongReference,
    /// Difference of payoff means, coarse noisy vs fine exact, over shared
    /// trajectories.
    Weak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPoint {
    pub n: usize,
    pub error: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorReport {
    pub mode: ErrorMode,
    pub per_n: Vec<ErrorPoint>,
    /// `None` when fewer than three points or a zero error.
    pub fitted_slope: Option<f64>,
    pub expected_exponent: f64,
    /// Error bound covering the configured W-disturbance.
    pub bound: BoundBranch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff: Option<Payoff>,
    pub config: ExperimentConfig,
}

impl ErrorReport {
    fn new(
        mode: ErrorMode,
        per_n: Vec<ErrorPoint>,
        cfg: &ExperimentConfig,
        payoff: Option<Payoff>,
    ) -> Self {
        let pairs: Vec<(f64, f64)> = per_n.iter().map(|p| (p.n as f64, p.error)).collect();
        Self {
            mode,
            fitted_slope: stats::fit_slope(&pairs).ok(),
            per_n,
            expected_exponent: cfg.problem.expected_exponent(),
            bound: cfg.noise.p_w.class().bound_branch(),
            payoff,
            config: cfg.echo(),
        }
    }

    pub fn error_at(&self, n: usize) -> Option<f64> {
        self.per_n.iter().find(|p| p.n == n).map(|p| p.error)
    }

    pub fn errors(&self) -> Vec<f64> {
        self.per_n.iter().map(|p| p.error).collect()
    }
}

/// Function applied to the integral in weak runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payoff {
    Put { strike: f64 },
    Constant { value: f64 },
}

impl Payoff {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Payoff::Put { strike } => payoff(x, strike),
            Payoff::Constant { value } => value,
        }
    }
}

impl Default for Payoff {
    fn default() -> Self {
        Payoff::Put {
            strike: DEFAULT_STRIKE_WEAK,
        }
    }
}

/// Stream key of replicate `j` at step count `n`.
pub fn replicate_key(n: usize, j: usize) -> u64 {
    ((n as u64) << 32) | j as u64
}

/// Worker pool with deterministic in-order collection.
pub struct Runner {
    pool: rayon::ThreadPool,
}

impl Runner {
    pub fn new(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(Error::Config("threads must be positive".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Runs `task(j)` for `j in 0..replicates`, results in index order.
    ///
    /// The first failing (lowest-index) replicate aborts the run; a panic in
    /// a task is reported the same way.
    pub fn run<T, F>(&self, replicates: usize, task: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync,
    {
        let guarded = |j: usize| -> Result<T> {
            match catch_unwind(AssertUnwindSafe(|| task(j))) {
                Ok(r) => r,
                Err(panic) => {
                    let msg = panic
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| panic.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "worker panicked".into());
                    Err(Error::Contract(format!("panic: {msg}")))
                }
            }
        };
        let results: Vec<Result<T>> = if self.threads() == 1 || replicates <= 1 {
            (0..replicates).map(guarded).collect()
        } else {
            self.pool
                .install(|| (0..replicates).into_par_iter().map(guarded).collect())
        };
        results
            .into_iter()
            .enumerate()
            .map(|(j, r)| {
                r.map_err(|e| Error::Replicate {
                    replicate: j as u64,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

/// Runs `task` over `replicates` indices on `threads` workers.
pub fn run_parallel<T, F>(threads: usize, replicates: usize, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    Runner::new(threads)?.run(replicates, task)
}

/// Adds `sign * A(X~, W~)` on the coarse mesh given by fine indices `idx`.
fn accumulate_coarse(
    acc: &mut CompensatedSum,
    bundle: &TrajectoryBundle,
    problem: &Integrand,
    idx: &[usize],
    noise: &NoiseSpec,
    negate: bool,
) -> Result<()> {
    let n = idx.len() - 1;
    let times = bundle.fine_mesh().points();
    let w_fine = bundle.w();
    let x = problem.sample(bundle, idx[..n].iter().copied())?;
    let w: Vec<f64> = idx.iter().map(|&k| w_fine[k]).collect();
    let x_noise = (noise.delta1 != 0.0).then(|| {
        x.iter()
            .zip(idx)
            .map(|(&xi, &k)| x_perturbation(xi, times[k], noise))
            .collect::<Vec<f64>>()
    });
    let w_noise = (noise.delta2 != 0.0).then(|| {
        w.iter()
            .zip(idx)
            .map(|(&wi, &k)| w_perturbation(wi, times[k], noise))
            .collect::<Vec<f64>>()
    });
    accumulate_noisy_rm(
        acc,
        NoisySeries {
            exact: &x,
            perturbation: x_noise.as_deref(),
        },
        NoisySeries {
            exact: &w,
            perturbation: w_noise.as_deref(),
        },
        negate,
    )
}

/// Adds the exact-information quadrature over every fine step.
fn accumulate_fine(
    acc: &mut CompensatedSum,
    bundle: &TrajectoryBundle,
    problem: &Integrand,
) -> Result<()> {
    accumulate_rm_with(acc, bundle.w(), false, |k| problem.eval_at(bundle, k))
}

fn bundle_spec(cfg: &ExperimentConfig, n_fine: usize) -> BundleSpec {
    BundleSpec {
        n_fine,
        horizon: cfg.horizon,
        with_w2: cfg.problem.needs_w2(),
        intensity: cfg.problem.intensity(),
    }
}

fn coarse_indices(fine: &Mesh, n: usize, horizon: f64) -> Result<Vec<usize>> {
    fine.indices_of(&Mesh::uniform(horizon, n)?)
}

fn moment_point(cfg: &ExperimentConfig, n: usize, diffs: &[f64]) -> ErrorPoint {
    let mut boot = rng::stream(cfg.seed, replicate_key(n, 0), rng::tag::BOOTSTRAP);
    ErrorPoint {
        n,
        error: stats::root_mean_moment(diffs, cfg.r),
        stderr: stats::moment_stderr(diffs, cfg.r, cfg.bootstrap_resamples, &mut boot),
    }
}

/// Per-replicate differences `I - A(X~, W~)` for X1 against the closed form.
pub fn x1_exact_differences(cfg: &ExperimentConfig, runner: &Runner, n: usize) -> Result<Vec<f64>> {
    let spec = bundle_spec(cfg, n);
    let noise = cfg.noise_for(n);
    let idx: Vec<usize> = (0..=n).collect();
    let half_t = 0.5 * cfg.horizon;
    runner.run(cfg.replicates, |j| {
        let bundle = TrajectoryBundle::generate(&spec, cfg.seed, replicate_key(n, j))?;
        let w_t = *bundle.w().last().unwrap();
        // W(T)^2 / 2 - T / 2, kept unrounded inside the accumulator
        let mut acc = CompensatedSum::new();
        acc.add_product(0.5 * w_t, w_t);
        acc.add(-half_t);
        accumulate_coarse(&mut acc, &bundle, &cfg.problem, &idx, &noise, true)?;
        Ok(acc.value())
    })
}

/// Per-replicate differences `A_fine(X, W) - A_n(X~, W~)` on shared paths.
pub fn reference_differences(
    cfg: &ExperimentConfig,
    runner: &Runner,
    n: usize,
) -> Result<Vec<f64>> {
    let n_fine = n * cfg.l_ref;
    let spec = bundle_spec(cfg, n_fine);
    let noise = cfg.noise_for(n);
    let idx = coarse_indices(&Mesh::uniform(cfg.horizon, n_fine)?, n, cfg.horizon)?;
    runner.run(cfg.replicates, |j| {
        let bundle = TrajectoryBundle::generate(&spec, cfg.seed, replicate_key(n, j))?;
        let mut acc = CompensatedSum::new();
        accumulate_fine(&mut acc, &bundle, &cfg.problem)?;
        accumulate_coarse(&mut acc, &bundle, &cfg.problem, &idx, &noise, true)?;
        Ok(acc.value())
    })
}

/// Strong error of X1 against `W(T)^2/2 - T/2`. Paths live on the
/// quadrature mesh itself; `l_ref` is not used.
pub fn strong_error_exact_x1(cfg: &ExperimentConfig) -> Result<ErrorReport> {
    cfg.validate()?;
    if cfg.problem != Integrand::X1Wiener {
        return Err(Error::Config(format!(
            "closed-form strong error needs problem x1, got {}",
            cfg.problem
        )));
    }
    let runner = Runner::new(cfg.effective_threads())?;
    let per_n = cfg
        .n_list
        .iter()
        .map(|&n| {
            Ok(moment_point(
                cfg,
                n,
                &x1_exact_differences(cfg, &runner, n)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorReport::new(ErrorMode::StrongExact, per_n, cfg, None))
}

/// Strong error against the `l_ref`-times finer exact-information quadrature.
pub fn strong_error_reference(cfg: &ExperimentConfig) -> Result<ErrorReport> {
    cfg.validate()?;
    let runner = Runner::new(cfg.effective_threads())?;
    let per_n = cfg
        .n_list
        .iter()
        .map(|&n| {
            Ok(moment_point(
                cfg,
                n,
                &reference_differences(cfg, &runner, n)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorReport::new(
        ErrorMode::StrongReference,
        per_n,
        cfg,
        None,
    ))
}

/// Closed form for X1, reference mesh otherwise.
pub fn strong_error(cfg: &ExperimentConfig) -> Result<ErrorReport> {
    if cfg.problem == Integrand::X1Wiener {
        strong_error_exact_x1(cfg)
    } else {
        strong_error_reference(cfg)
    }
}

/// Weak error `|mean f(A_n(X~, W~)) - mean f(A_fine(X, W))|` over shared
/// trajectories.
pub fn weak_error(cfg: &ExperimentConfig, payoff: Payoff) -> Result<ErrorReport> {
    cfg.validate()?;
    let runner = Runner::new(cfg.effective_threads())?;
    let mut per_n = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let n_fine = n * cfg.l_ref;
        let spec = bundle_spec(cfg, n_fine);
        let noise = cfg.noise_for(n);
        let idx = coarse_indices(&Mesh::uniform(cfg.horizon, n_fine)?, n, cfg.horizon)?;
        let diffs = runner.run(cfg.replicates, |j| {
            let bundle = TrajectoryBundle::generate(&spec, cfg.seed, replicate_key(n, j))?;
            let mut fine = CompensatedSum::new();
            accumulate_fine(&mut fine, &bundle, &cfg.problem)?;
            let mut coarse = CompensatedSum::new();
            accumulate_coarse(&mut coarse, &bundle, &cfg.problem, &idx, &noise, false)?;
            Ok(payoff.eval(coarse.value()) - payoff.eval(fine.value()))
        })?;
        let weak = |sample: &mut dyn Iterator<Item = f64>, m: usize| {
            (sample.collect::<CompensatedSum>().value() / m as f64).abs()
        };
        let error = weak(&mut diffs.iter().copied(), diffs.len());
        let mut boot = rng::stream(cfg.seed, replicate_key(n, 0), rng::tag::BOOTSTRAP);
        let stderr =
            stats::bootstrap_stderr(diffs.len(), cfg.bootstrap_resamples, &mut boot, |ix| {
                weak(&mut ix.iter().map(|&i| diffs[i]), ix.len())
            });
        per_n.push(ErrorPoint { n, error, stderr });
    }
    Ok(ErrorReport::new(ErrorMode::Weak, per_n, cfg, Some(payoff)))
}

/// Precision schedule of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    /// One report per fixed `delta1 = delta2 = delta > 0`; W-noise must be
    /// in the smooth class so the floor bound applies.
    Floor { deltas: Vec<f64> },
    /// `delta1 = delta2 = n^(-1/2)`.
    Coupled,
    /// Fixed `delta2 > 0` with a W-disturbance outside the smooth class.
    Blowup { delta2: f64 },
}

impl Regime {
    /// `1e-4, 1e-3, 1e-2, 1e-1`.
    pub fn default_floor() -> Self {
        Regime::Floor {
            deltas: vec![1e-4, 1e-3, 1e-2, 1e-1],
        }
    }
}

pub fn noise_regime_sweep(cfg: &ExperimentConfig, regime: &Regime) -> Result<Vec<ErrorReport>> {
    let branch = cfg.noise.p_w.class().bound_branch();
    match regime {
        Regime::Floor { deltas } => {
            if branch != BoundBranch::Floor {
                return Err(Error::Config(format!(
                    "floor regime needs a smooth W-disturbance, '{}' is {:?}",
                    cfg.noise.p_w,
                    cfg.noise.p_w.class()
                )));
            }
            if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                return Err(Error::Config(
                    "floor regime needs a non-empty list of positive deltas".into(),
                ));
            }
            deltas
                .iter()
                .map(|&d| {
                    let c = ExperimentConfig {
                        noise: cfg.noise.with_deltas(d, d),
                        delta_coupling: DeltaCoupling::None,
                        ..cfg.clone()
                    };
                    strong_error(&c)
                })
                .collect()
        }
        Regime::Coupled => {
            let c = cfg.clone().with_coupling(DeltaCoupling::InvSqrtN);
            Ok(vec![strong_error(&c)?])
        }
        Regime::Blowup { delta2 } => {
            if !matches!(branch, BoundBranch::C11Growth | BoundBranch::HolderGrowth) {
                return Err(Error::Config(format!(
                    "blowup regime needs a W-disturbance in the C^{{1,1}} or Hoelder class, '{}' is {:?}",
                    cfg.noise.p_w,
                    cfg.noise.p_w.class()
                )));
            }
            if !(*delta2 > 0.0 && delta2.is_finite()) {
                return Err(Error::Config(format!(
                    "blowup regime needs delta2 > 0, got {delta2}"
                )));
            }
            let c = ExperimentConfig {
                noise: cfg.noise.with_deltas(cfg.noise.delta1, *delta2),
                delta_coupling: DeltaCoupling::None,
                ..cfg.clone()
            };
            Ok(vec![strong_error(&c)?])
        }
    }
}
