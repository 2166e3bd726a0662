//! Command line front end: flag and config-file parsing into a
//! [`RunManifest`], and execution of a manifest.
//!
//! Config files are TOML:
//!
//! ```toml
//! subcommand = "noise-sweep"      # strong-error | weak-error | noise-sweep | bench
//! output = "floor.csv"            # omit for stdout
//! format = "csv"                  # csv | json; default from the extension
//! regime = { regime = "floor", deltas = [0.01, 0.1] }
//!
//! [config]
//! problem = "x1"                  # or { kind = "x3", strike = 9.0 }
//! n_list = [64, 256, 1024, 4096]
//! replicates = 2048
//! l_ref = 1000
//! seed = 7
//!
//! [config.noise]
//! delta1 = 0.01
//! delta2 = 0.01
//! p_x = "identity"
//! p_w = "xt2"
//! ```

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bench::bench;
use crate::error::{Error, Result};
use crate::experiments::{
    default_n_list, default_reference_n_list, noise_regime_sweep, strong_error,
    strong_error_reference, weak_error, DeltaCoupling, ExperimentConfig, Payoff, Regime,
    DEFAULT_BOOTSTRAP, DEFAULT_L_REF, DEFAULT_REPLICATES, DEFAULT_SEED, DEFAULT_STRIKE_WEAK,
    THREADS_ENV,
};
use crate::integrands::Integrand;
use crate::noise::{BoundBranch, DisturbanceFunction, NoiseSpec};
use crate::paths::DEFAULT_FINE_CAP;
use crate::report::{check_writable, render, render_many, OutputFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubcommandKind {
    StrongError,
    WeakError,
    NoiseSweep,
    Bench,
}

/// Everything needed to perform one run, with all defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub subcommand: SubcommandKind,
    pub config: ExperimentConfig,
    /// `None` writes to stdout.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<OutputFormat>,
    /// Force the reference-mesh estimator even for x1.
    #[serde(default)]
    pub reference: bool,
    #[serde(default)]
    pub regime: Option<Regime>,
    #[serde(default)]
    pub payoff: Option<Payoff>,
    #[serde(default)]
    pub thread_list: Option<Vec<usize>>,
}

impl RunManifest {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut m: RunManifest = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        m.materialize();
        Ok(m)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        if OutputFormat::from_path(path) == Some(OutputFormat::Json) {
            let mut m: RunManifest =
                serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            m.materialize();
            Ok(m)
        } else {
            Self::from_toml(&text)
        }
    }

    /// Fills per-subcommand defaults.
    fn materialize(&mut self) {
        if self.format.is_none() {
            self.format = Some(
                self.output
                    .as_deref()
                    .and_then(OutputFormat::from_path)
                    .unwrap_or_default(),
            );
        }
        match self.subcommand {
            SubcommandKind::WeakError if self.payoff.is_none() => {
                self.payoff = Some(Payoff::default())
            }
            SubcommandKind::NoiseSweep if self.regime.is_none() => {
                self.regime = Some(Regime::default_floor())
            }
            SubcommandKind::Bench if self.thread_list.is_none() => {
                self.thread_list = Some(vec![1, 2, 4, 8])
            }
            _ => {}
        }
    }

    pub fn output_format(&self) -> OutputFormat {
        self.format.unwrap_or_default()
    }

    /// Checks everything that can be checked before computing.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if let (Some(path), Some(fmt)) = (&self.output, self.format) {
            if let Some(ext) = OutputFormat::from_path(path) {
                if ext != fmt {
                    return Err(Error::Config(format!(
                        "output {} does not match format {fmt:?}",
                        path.display()
                    )));
                }
            }
            check_writable(path)?;
        }
        let branch = self.config.noise.p_w.class().bound_branch();
        match (&self.subcommand, &self.regime) {
            (SubcommandKind::NoiseSweep, Some(Regime::Floor { deltas })) => {
                if branch != BoundBranch::Floor {
                    return Err(Error::Config(format!(
                        "floor regime requires a smooth W-disturbance; '{}' is not",
                        self.config.noise.p_w
                    )));
                }
                if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0)) {
                    return Err(Error::Config("floor regime needs positive deltas".into()));
                }
            }
            (SubcommandKind::NoiseSweep, Some(Regime::Blowup { delta2 })) => {
                if branch == BoundBranch::Floor {
                    return Err(Error::Config(format!(
                        "blowup regime requires a non-smooth W-disturbance; '{}' is smooth",
                        self.config.noise.p_w
                    )));
                }
                if !(*delta2 > 0.0) {
                    return Err(Error::Config("blowup regime needs delta2 > 0".into()));
                }
            }
            _ => {}
        }
        if let Some(Payoff::Put { strike }) = self.payoff {
            if !(strike > 0.0) {
                return Err(Error::Config(format!(
                    "payoff strike must be positive, got {strike}"
                )));
            }
        }
        if let Some(list) = &self.thread_list {
            if list.is_empty() || list.contains(&0) {
                return Err(Error::Config(
                    "thread_list must hold positive counts".into(),
                ));
            }
        }
        Ok(())
    }

    /// Runs the manifest and returns the rendered output.
    pub fn run(&self) -> Result<String> {
        self.validate()?;
        let format = self.output_format();
        match self.subcommand {
            SubcommandKind::StrongError => {
                let report = if self.reference {
                    strong_error_reference(&self.config)?
                } else {
                    strong_error(&self.config)?
                };
                render(&report, format)
            }
            SubcommandKind::WeakError => render(
                &weak_error(&self.config, self.payoff.unwrap_or_default())?,
                format,
            ),
            SubcommandKind::NoiseSweep => {
                let regime = self.regime.clone().unwrap_or_else(Regime::default_floor);
                render_many(&noise_regime_sweep(&self.config, &regime)?, format)
            }
            SubcommandKind::Bench => {
                let table = bench(&self.config, self.thread_list.as_deref().unwrap_or(&[1]))?;
                match format {
                    OutputFormat::Csv => table.to_csv(),
                    OutputFormat::Json => serde_json::to_string_pretty(&table)
                        .map(|s| s + "\n")
                        .map_err(|e| Error::Parse(e.to_string())),
                }
            }
        }
    }

    /// Runs and writes to the output path or stdout.
    pub fn execute(&self) -> Result<()> {
        let text = self.run()?;
        match &self.output {
            Some(path) => {
                fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
            }
            None => std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e)),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "noisy-ito",
    version,
    about = "Riemann-Maruyama quadrature error lab"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Strong (L^r) error per n: closed form for x1, reference mesh otherwise.
    StrongError {
        #[command(flatten)]
        common: CommonArgs,
        /// Use the reference-mesh estimator for x1 as well.
        #[arg(long)]
        reference: bool,
    },
    /// Weak error of a put payoff on the integral.
    WeakError {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = DEFAULT_STRIKE_WEAK)]
        strike: f64,
    },
    /// Strong error under a precision schedule.
    NoiseSweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "floor")]
        regime: RegimeArg,
        /// Precision levels for the floor regime.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1e-4, 1e-3, 1e-2, 1e-1])]
        deltas: Vec<f64>,
        /// Fixed W precision for the blowup regime.
        #[arg(long = "blowup-delta2", default_value_t = 1e-2)]
        blowup_delta2: f64,
    },
    /// Time a strong-error workload at several thread counts.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long = "thread-list", value_delimiter = ',', default_values_t = vec![1, 2, 4, 8])]
        thread_list: Vec<usize>,
    },
    /// Run a TOML (or .json) manifest.
    Run {
        config: PathBuf,
        #[arg(long)]
        dry_run: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum RegimeArg {
    Floor,
    Coupled,
    Blowup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CouplingArg {
    None,
    InvSqrtN,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// x1 | x2 | x3 | x4 | sde | const:<value>
    #[arg(long)]
    pub problem: String,
    /// Comma-separated increasing step counts.
    #[arg(long = "n", value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    #[arg(short = 'M', long = "replicates", default_value_t = DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long = "l-ref", default_value_t = DEFAULT_L_REF)]
    pub l_ref: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(short = 'T', long = "horizon", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 2.0)]
    pub r: f64,
    #[arg(long, default_value_t = 0.0)]
    pub delta1: f64,
    #[arg(long, default_value_t = 0.0)]
    pub delta2: f64,
    /// Disturbance of X: one | identity | xt2 | t | sqrt-abs | x-abs-x-half
    #[arg(long = "px", default_value = "one")]
    pub p_x: String,
    /// Disturbance of W, same names as --px.
    #[arg(long = "pw", default_value = "one")]
    pub p_w: String,
    #[arg(long, value_enum, default_value = "none")]
    pub coupling: CouplingArg,
    #[arg(long = "fine-cap", default_value_t = DEFAULT_FINE_CAP)]
    pub fine_cap: usize,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    pub bootstrap: usize,
    #[arg(long, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    /// Print the materialized manifest as JSON and exit.
    #[arg(long)]
    pub dry_run: bool,
}

impl CommonArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let problem: Integrand = self.problem.parse()?;
        let n_list = self.n_list.clone().unwrap_or_else(|| {
            if problem == Integrand::X1Wiener {
                default_n_list()
            } else {
                default_reference_n_list()
            }
        });
        Ok(ExperimentConfig {
            problem,
            n_list,
            replicates: self.replicates,
            l_ref: self.l_ref,
            noise: NoiseSpec::new(
                self.delta1,
                self.p_x.parse::<DisturbanceFunction>()?,
                self.delta2,
                self.p_w.parse::<DisturbanceFunction>()?,
            ),
            seed: self.seed,
            horizon: self.horizon,
            r: self.r,
            delta_coupling: match self.coupling {
                CouplingArg::None => DeltaCoupling::None,
                CouplingArg::InvSqrtN => DeltaCoupling::InvSqrtN,
            },
            fine_cap: self.fine_cap,
            bootstrap_resamples: self.bootstrap,
            threads: self.threads,
        })
    }

    fn manifest(&self, subcommand: SubcommandKind) -> Result<RunManifest> {
        let format = self.format.as_deref().map(str::parse).transpose()?;
        let mut m = RunManifest {
            subcommand,
            config: self.config()?,
            output: self.output.clone(),
            format,
            reference: false,
            regime: None,
            payoff: None,
            thread_list: None,
        };
        m.materialize();
        Ok(m)
    }
}

/// What the binary should do after parsing.
#[derive(Debug)]
pub struct Invocation {
    pub manifest: RunManifest,
    pub dry_run: bool,
}

/// Turns parsed flags (or a manifest file) into a validated manifest.
pub fn parse_config(cli: &Cli) -> Result<Invocation> {
    let (manifest, dry_run) = match &cli.command {
        Command::StrongError { common, reference } => {
            let mut m = common.manifest(SubcommandKind::StrongError)?;
            m.reference = *reference;
            (m, common.dry_run)
        }
        Command::WeakError { common, strike } => {
            let mut m = common.manifest(SubcommandKind::WeakError)?;
            m.payoff = Some(Payoff::Put { strike: *strike });
            (m, common.dry_run)
        }
        Command::NoiseSweep {
            common,
            regime,
            deltas,
            blowup_delta2,
        } => {
            let mut m = common.manifest(SubcommandKind::NoiseSweep)?;
            m.regime = Some(match regime {
                RegimeArg::Floor => Regime::Floor {
                    deltas: deltas.clone(),
                },
                RegimeArg::Coupled => Regime::Coupled,
                RegimeArg::Blowup => Regime::Blowup {
                    delta2: *blowup_delta2,
                },
            });
            (m, common.dry_run)
        }
        Command::Bench {
            common,
            thread_list,
        } => {
            let mut m = common.manifest(SubcommandKind::Bench)?;
            m.thread_list = Some(thread_list.clone());
            (m, common.dry_run)
        }
        Command::Run { config, dry_run } => (RunManifest::from_file(config)?, *dry_run),
    };
    manifest.validate()?;
    Ok(Invocation { manifest, dry_run })
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = parse_config(&cli).and_then(|inv| {
        if inv.dry_run {
            let json = serde_json::to_string_pretty(&inv.manifest)
                .map_err(|e| Error::Parse(e.to_string()))?;
            println!("{json}");
            Ok(())
        } else {
            inv.manifest.execute()
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("noisy-ito: {e}");
            e.exit_code()
        }
    }
}
