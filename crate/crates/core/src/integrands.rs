//! Test integrands driven by a [`TrajectoryBundle`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::paths::{count_up_to, TrajectoryBundle};

pub const DEFAULT_STRIKE: f64 = 9.0;
pub const DEFAULT_SIGMA: f64 = 1.0;
pub const DEFAULT_S0: f64 = 1.0;
pub const DEFAULT_INTENSITY: f64 = 5.0;
pub const DEFAULT_MU: f64 = 3.0;

/// Integrand process `X(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Integrand {
    /// `X(t) = W(t)`; the integral has a closed form.
    #[serde(rename = "x1")]
    X1Wiener,
    /// `X(t) = W2(t)`, independent of the integrator.
    #[serde(rename = "x2")]
    X2IndepWiener,
    /// `X(t) = max(0, K - S(t)) S(t)` with geometric Brownian motion
    /// `S(t) = S0 exp(-sigma^2 t / 2 + sigma W(t))`.
    #[serde(rename = "x3")]
    X3PutWeighted {
        #[serde(default = "default_strike")]
        strike: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "default_s0")]
        s0: f64,
    },
    /// `X(t) = N(t) exp(W(t))` with `N` Poisson.
    #[serde(rename = "x4")]
    X4PoissonExp {
        #[serde(default = "default_intensity")]
        intensity: f64,
    },
    /// `X(t) = exp(mu (T - t)) W2(t)`, whose integral solves
    /// `dY = mu Y dt + W2 dW`, `Y(0) = 0`.
    #[serde(rename = "sde")]
    SdeKernel {
        #[serde(default = "default_mu")]
        mu: f64,
    },
    /// `X(t) = value`.
    #[serde(rename = "const")]
    Constant { value: f64 },
}

fn default_strike() -> f64 {
    DEFAULT_STRIKE
}
fn default_sigma() -> f64 {
    DEFAULT_SIGMA
}
fn default_s0() -> f64 {
    DEFAULT_S0
}
fn default_intensity() -> f64 {
    DEFAULT_INTENSITY
}
fn default_mu() -> f64 {
    DEFAULT_MU
}

impl Integrand {
    pub fn x3() -> Self {
        Integrand::X3PutWeighted {
            strike: DEFAULT_STRIKE,
            sigma: DEFAULT_SIGMA,
            s0: DEFAULT_S0,
        }
    }

    pub fn x4() -> Self {
        Integrand::X4PoissonExp {
            intensity: DEFAULT_INTENSITY,
        }
    }

    pub fn sde() -> Self {
        Integrand::SdeKernel { mu: DEFAULT_MU }
    }

    /// The five catalogue problems with default parameters.
    pub fn catalogue() -> [Integrand; 5] {
        [
            Integrand::X1Wiener,
            Integrand::X2IndepWiener,
            Integrand::x3(),
            Integrand::x4(),
            Integrand::sde(),
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Integrand::X1Wiener => "x1",
            Integrand::X2IndepWiener => "x2",
            Integrand::X3PutWeighted { .. } => "x3",
            Integrand::X4PoissonExp { .. } => "x4",
            Integrand::SdeKernel { .. } => "sde",
            Integrand::Constant { .. } => "const",
        }
    }

    pub fn needs_w2(&self) -> bool {
        matches!(self, Integrand::X2IndepWiener | Integrand::SdeKernel { .. })
    }

    /// Poisson intensity, if the integrand reads arrivals.
    pub fn intensity(&self) -> Option<f64> {
        match self {
            Integrand::X4PoissonExp { intensity } => Some(*intensity),
            _ => None,
        }
    }

    /// Hoelder exponent in mean square expected for this integrand.
    pub fn expected_exponent(&self) -> f64 {
        match self {
            Integrand::Constant { .. } => 1.0,
            _ => 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{} parameter {name} must be positive, got {v}",
                    self.name()
                )))
            }
        };
        match *self {
            Integrand::X3PutWeighted { strike, sigma, s0 } => {
                positive("strike", strike)?;
                positive("sigma", sigma)?;
                positive("s0", s0)
            }
            Integrand::X4PoissonExp { intensity } => positive("intensity", intensity),
            Integrand::SdeKernel { mu } if !mu.is_finite() => Err(Error::Config(format!(
                "sde parameter mu must be finite, got {mu}"
            ))),
            Integrand::Constant { value } if !value.is_finite() => Err(Error::Config(format!(
                "constant integrand must be finite, got {value}"
            ))),
            _ => Ok(()),
        }
    }

    /// `X` at fine-grid index `idx` of `bundle`.
    #[inline]
    pub fn eval_at(&self, bundle: &TrajectoryBundle, idx: usize) -> Result<f64> {
        let t = bundle.fine_mesh().points()[idx];
        let horizon = bundle.horizon();
        Ok(match *self {
            Integrand::X1Wiener => bundle.w()[idx],
            Integrand::X2IndepWiener => bundle.w2()?[idx],
            Integrand::X3PutWeighted { strike, sigma, s0 } => {
                let s = s0 * (-0.5 * sigma * sigma * t + sigma * bundle.w()[idx]).exp();
                payoff(s, strike) * s
            }
            Integrand::X4PoissonExp { .. } => {
                let n = count_up_to(bundle.arrivals()?, t);
                if n == 0 {
                    0.0
                } else {
                    n as f64 * bundle.w()[idx].exp()
                }
            }
            Integrand::SdeKernel { mu } => (mu * (horizon - t)).exp() * bundle.w2()?[idx],
            Integrand::Constant { value } => value,
        })
    }

    /// `X(t)` for a fine-grid time `t`.
    pub fn eval(&self, t: f64, bundle: &TrajectoryBundle) -> Result<f64> {
        let idx = bundle
            .fine_mesh()
            .index_of(t)
            .ok_or_else(|| Error::Alignment(format!("t = {t} is not a fine-grid point")))?;
        self.eval_at(bundle, idx)
    }

    /// `X` at each of the given fine-grid indices.
    pub fn sample(
        &self,
        bundle: &TrajectoryBundle,
        indices: impl IntoIterator<Item = usize>,
    ) -> Result<Vec<f64>> {
        indices
            .into_iter()
            .map(|i| self.eval_at(bundle, i))
            .collect()
    }
}

impl fmt::Display for Integrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Integrand::Constant { value } => write!(f, "const:{value}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for Integrand {
    type Err = Error;

    /// Parses `x1 | x2 | x3 | x4 | sde | const:<value>` with default
    /// parameters.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(v) = s.strip_prefix("const:") {
            let value = v
                .parse()
                .map_err(|_| Error::Config(format!("bad constant integrand value '{v}'")))?;
            return Ok(Integrand::Constant { value });
        }
        Ok(match s.as_str() {
            "x1" => Integrand::X1Wiener,
            "x2" => Integrand::X2IndepWiener,
            "x3" => Integrand::x3(),
            "x4" => Integrand::x4(),
            "sde" => Integrand::sde(),
            other => return Err(Error::Config(format!("unknown problem '{other}'"))),
        })
    }
}

/// Accepts either a bare kind string or a table with parameters.
pub(crate) fn deserialize_integrand<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<Integrand, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Name(String),
        Full(Integrand),
    }
    match Repr::deserialize(d)? {
        Repr::Name(s) => s.parse().map_err(serde::de::Error::custom),
        Repr::Full(i) => Ok(i),
    }
}

/// Closed-form `int_0^T W dW = W(T)^2 / 2 - T / 2`.
pub fn exact_integral_x1(w_t: f64, horizon: f64) -> f64 {
    0.5 * w_t * w_t - 0.5 * horizon
}

/// Put payoff `max(0, K - x)`.
#[inline]
pub fn payoff(x: f64, strike: f64) -> f64 {
    (strike - x).max(0.0)
}
