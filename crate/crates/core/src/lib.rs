//! Riemann-Maruyama quadrature for Ito integrals `int_0^T X dW` when both
//! `X` and `W` are only observed through noisy evaluations, together with a
//! deterministic, parallel Monte Carlo harness for measuring its strong and
//! weak errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod bench;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod integrands;
pub mod noise;
pub mod paths;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use experiments::{
    noise_regime_sweep, run_parallel, strong_error, strong_error_exact_x1, strong_error_reference,
    weak_error, DeltaCoupling, ErrorMode, ErrorPoint, ErrorReport, ExperimentConfig, Payoff,
    Regime,
};
pub use integrands::{exact_integral_x1, payoff, Integrand};
pub use noise::{perturb_w, perturb_x, DisturbanceFunction, NoiseSpec, RegularityClass};
pub use paths::{Mesh, TrajectoryBundle};
pub use quadrature::{riemann_maruyama, QuadratureInput};
pub use report::OutputFormat;
pub use stats::fit_slope;
