//! Analytic noise model: an evaluation `v` at time `t` is observed as
//! `v + delta * p(t, v)` for a disturbance function `p`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Regularity class a disturbance function is declared to belong to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum RegularityClass {
    /// `|p(t, y)| <= 1 + |y|`.
    K1,
    /// `C^{1,2}` with `p_t, p_y, p_yy` bounded by `1 + |y|^s`.
    K2 { s: f64 },
    /// `C^{1,1}` with `p_t, p_y` bounded by `1 + |y|^s`.
    K2Bar { s: f64 },
    /// `|p(t,x) - p(z,y)| <= |t - z|^alpha + |x - y|^beta`.
    K3 { alpha: f64, beta: f64 },
}

/// Which of the three upper error bounds covers a given W-disturbance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundBranch {
    /// `n^-rho + d1 + d2 + d1 d2`: noise only adds a floor.
    Floor,
    /// `d2 (1 + d1)(1 + sum dt^(1/2))`: may grow like `n^(1/2)`.
    C11Growth,
    /// `d2 (1 + d1) sum(dt^alpha + dt^(beta/2))`: may grow like
    /// `n^(1 - min(alpha, beta/2))`.
    HolderGrowth,
    /// The class says nothing about W-noise.
    Unbounded,
}

impl RegularityClass {
    pub fn bound_branch(&self) -> BoundBranch {
        match self {
            RegularityClass::K2 { .. } => BoundBranch::Floor,
            RegularityClass::K2Bar { .. } => BoundBranch::C11Growth,
            RegularityClass::K3 { .. } => BoundBranch::HolderGrowth,
            RegularityClass::K1 => BoundBranch::Unbounded,
        }
    }

    fn growth(s: f64, y: f64) -> f64 {
        if s == 0.0 {
            1.0
        } else {
            1.0 + y.abs().powf(s)
        }
    }
}

type DisturbanceFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// User-supplied disturbance with a declared class.
#[derive(Clone)]
pub struct CustomDisturbance {
    pub name: String,
    pub class: RegularityClass,
    f: Arc<DisturbanceFn>,
}

impl CustomDisturbance {
    pub fn new(
        name: impl Into<String>,
        class: RegularityClass,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            class,
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for CustomDisturbance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDisturbance")
            .field("name", &self.name)
            .field("class", &self.class)
            .finish()
    }
}

impl PartialEq for CustomDisturbance {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.class == other.class && Arc::ptr_eq(&self.f, &other.f)
    }
}

/// Disturbance function `p(t, x)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum DisturbanceFunction {
    /// `p = 1`
    #[default]
    One,
    /// `p = x`
    Identity,
    /// `p = x t^2`
    XtSquared,
    /// `p = t`
    LinearDriftT,
    /// `p = sqrt(|x|)`
    SqrtAbs,
    /// `p = x |x| / 2`
    XAbsXHalf,
    Custom(CustomDisturbance),
}

impl DisturbanceFunction {
    pub fn custom(
        name: impl Into<String>,
        class: RegularityClass,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        DisturbanceFunction::Custom(CustomDisturbance::new(name, class, f))
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            DisturbanceFunction::One => 1.0,
            DisturbanceFunction::Identity => x,
            DisturbanceFunction::XtSquared => x * t * t,
            DisturbanceFunction::LinearDriftT => t,
            DisturbanceFunction::SqrtAbs => x.abs().sqrt(),
            DisturbanceFunction::XAbsXHalf => x * x.abs() / 2.0,
            DisturbanceFunction::Custom(c) => (c.f)(t, x),
        }
    }

    pub fn class(&self) -> RegularityClass {
        match self {
            DisturbanceFunction::One
            | DisturbanceFunction::Identity
            | DisturbanceFunction::LinearDriftT => RegularityClass::K2 { s: 0.0 },
            DisturbanceFunction::XtSquared => RegularityClass::K2 { s: 1.0 },
            DisturbanceFunction::SqrtAbs => RegularityClass::K3 {
                alpha: 1.0,
                beta: 0.5,
            },
            DisturbanceFunction::XAbsXHalf => RegularityClass::K2Bar { s: 1.0 },
            DisturbanceFunction::Custom(c) => c.class,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            DisturbanceFunction::One => "one",
            DisturbanceFunction::Identity => "identity",
            DisturbanceFunction::XtSquared => "xt2",
            DisturbanceFunction::LinearDriftT => "t",
            DisturbanceFunction::SqrtAbs => "sqrt-abs",
            DisturbanceFunction::XAbsXHalf => "x-abs-x-half",
            DisturbanceFunction::Custom(c) => &c.name,
        }
    }
}

impl fmt::Display for DisturbanceFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DisturbanceFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "one" | "1" => DisturbanceFunction::One,
            "identity" | "x" => DisturbanceFunction::Identity,
            "xt2" | "xt^2" | "xt-squared" => DisturbanceFunction::XtSquared,
            "t" | "linear-t" => DisturbanceFunction::LinearDriftT,
            "sqrt-abs" | "sqrt|x|" => DisturbanceFunction::SqrtAbs,
            "x-abs-x-half" | "x|x|/2" => DisturbanceFunction::XAbsXHalf,
            other => {
                return Err(Error::Config(format!(
                    "unknown disturbance function '{other}'"
                )))
            }
        })
    }
}

impl Serialize for DisturbanceFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DisturbanceFunction::Custom(c) => Err(serde::ser::Error::custom(format!(
                "custom disturbance '{}' cannot be serialized",
                c.name
            ))),
            other => s.serialize_str(other.name()),
        }
    }
}

impl<'de> Deserialize<'de> for DisturbanceFunction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Precision levels and disturbance functions for X and W.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub delta1: f64,
    pub delta2: f64,
    #[serde(default)]
    pub p_x: DisturbanceFunction,
    #[serde(default)]
    pub p_w: DisturbanceFunction,
}

impl NoiseSpec {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn new(
        delta1: f64,
        p_x: DisturbanceFunction,
        delta2: f64,
        p_w: DisturbanceFunction,
    ) -> Self {
        Self {
            delta1,
            delta2,
            p_x,
            p_w,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.delta1 == 0.0 && self.delta2 == 0.0
    }

    pub fn with_deltas(&self, delta1: f64, delta2: f64) -> Self {
        Self {
            delta1,
            delta2,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in [("delta1", self.delta1), ("delta2", self.delta2)] {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be a non-negative number, got {d}"
                )));
            }
        }
        Ok(())
    }
}

#[inline]
fn perturb(v: f64, t: f64, delta: f64, p: &DisturbanceFunction) -> f64 {
    if delta == 0.0 {
        v
    } else {
        v + delta * p.eval(t, v)
    }
}

/// Noisy evaluation of the integrand: `x + delta1 * p_X(t, x)`.
#[inline]
pub fn perturb_x(x: f64, t: f64, spec: &NoiseSpec) -> f64 {
    perturb(x, t, spec.delta1, &spec.p_x)
}

/// Noisy evaluation of the Wiener process: `w + delta2 * p_W(t, w)`.
#[inline]
pub fn perturb_w(w: f64, t: f64, spec: &NoiseSpec) -> f64 {
    perturb(w, t, spec.delta2, &spec.p_w)
}

/// The additive part `delta1 * p_X(t, x)` alone.
#[inline]
pub fn x_perturbation(x: f64, t: f64, spec: &NoiseSpec) -> f64 {
    if spec.delta1 == 0.0 {
        0.0
    } else {
        spec.delta1 * spec.p_x.eval(t, x)
    }
}

/// The additive part `delta2 * p_W(t, w)` alone.
#[inline]
pub fn w_perturbation(w: f64, t: f64, spec: &NoiseSpec) -> f64 {
    if spec.delta2 == 0.0 {
        0.0
    } else {
        spec.delta2 * spec.p_w.eval(t, w)
    }
}

const FD_TOLERANCE: f64 = 1e-6;

/// Spot-checks the growth bound of `p`'s declared class on sample points.
///
/// Advisory only. An empty grid passes vacuously.
pub fn check_growth_bound(p: &DisturbanceFunction, grid: &[(f64, f64)]) -> bool {
    match p.class() {
        RegularityClass::K1 => grid
            .iter()
            .all(|&(t, x)| p.eval(t, x).abs() <= 1.0 + x.abs()),
        RegularityClass::K2 { s } => grid.iter().all(|&(t, x)| {
            let bound = RegularityClass::growth(s, x) + FD_TOLERANCE;
            d_dt(p, t, x).abs() <= bound
                && d_dx(p, t, x).abs() <= bound
                && d2_dx2(p, t, x).abs() <= bound
        }),
        RegularityClass::K2Bar { s } => grid.iter().all(|&(t, x)| {
            let bound = RegularityClass::growth(s, x) + FD_TOLERANCE;
            d_dt(p, t, x).abs() <= bound && d_dx(p, t, x).abs() <= bound
        }),
        RegularityClass::K3 { alpha, beta } => grid.iter().all(|&(t, x)| {
            grid.iter().all(|&(z, y)| {
                (p.eval(t, x) - p.eval(z, y)).abs()
                    <= (t - z).abs().powf(alpha) + (x - y).abs().powf(beta) + FD_TOLERANCE
            })
        }),
    }
}

const H1: f64 = 1e-5;
const H2: f64 = 1e-3;

fn d_dt(p: &DisturbanceFunction, t: f64, x: f64) -> f64 {
    (p.eval(t + H1, x) - p.eval(t - H1, x)) / (2.0 * H1)
}

fn d_dx(p: &DisturbanceFunction, t: f64, x: f64) -> f64 {
    (p.eval(t, x + H1) - p.eval(t, x - H1)) / (2.0 * H1)
}

fn d2_dx2(p: &DisturbanceFunction, t: f64, x: f64) -> f64 {
    (p.eval(t, x + H2) - 2.0 * p.eval(t, x) + p.eval(t, x - H2)) / (H2 * H2)
}
