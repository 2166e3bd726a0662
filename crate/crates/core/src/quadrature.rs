//! Riemann-Maruyama quadrature `sum_i X(t_i) (W(t_{i+1}) - W(t_i))`.
//!
//! Sums are accumulated left to right in a [`CompensatedSum`]. Each term is
//! split into error-free pieces first: the increment through `two_sum` and
//! the product through an FMA `two_product`, so a constant integrand
//! telescopes exactly and an error `reference - approximation` can be
//! accumulated into one sum without cancellation between two rounded totals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::Mesh;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    /// Adds `a * b` without rounding the product.
    #[inline]
    pub fn add_product(&mut self, a: f64, b: f64) {
        let (p, e) = two_product(a, b);
        self.add(p);
        if e != 0.0 {
            self.add(e);
        }
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
pub fn two_product(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Adds `x * (w1 - w0)` exactly up to the accumulator's own rounding.
#[inline]
fn add_term(acc: &mut CompensatedSum, x: f64, w0: f64, w1: f64) {
    let (d, dl) = two_sum(w1, -w0);
    acc.add_product(x, d);
    if dl != 0.0 {
        acc.add_product(x, dl);
    }
}

/// Accumulates `sign * sum_i x[i] (w[i+1] - w[i])` into `acc`.
///
/// `x.len() + 1` must equal `w.len()`; this is checked by the callers.
#[inline]
pub fn accumulate_rm(acc: &mut CompensatedSum, x: &[f64], w: &[f64], negate: bool) {
    debug_assert_eq!(x.len() + 1, w.len());
    for (xi, wi) in x.iter().zip(w.windows(2)) {
        let xi = if negate { -xi } else { *xi };
        add_term(acc, xi, wi[0], wi[1]);
    }
}

/// Like [`accumulate_rm`] with the integrand given by a closure over the
/// step index, so fine-grid references need no integrand buffer.
#[inline]
pub fn accumulate_rm_with<F>(
    acc: &mut CompensatedSum,
    w: &[f64],
    negate: bool,
    mut x: F,
) -> Result<()>
where
    F: FnMut(usize) -> Result<f64>,
{
    for (i, wi) in w.windows(2).enumerate() {
        let xi = x(i)?;
        add_term(acc, if negate { -xi } else { xi }, wi[0], wi[1]);
    }
    Ok(())
}

/// Noisy observations stored as exact values plus the additive perturbation.
///
/// Keeping the two apart lets the quadrature expand bilinearly, so e.g. a
/// constant perturbation of W contributes exactly zero.
#[derive(Debug, Clone, Copy)]
pub struct NoisySeries<'a> {
    pub exact: &'a [f64],
    pub perturbation: Option<&'a [f64]>,
}

impl<'a> NoisySeries<'a> {
    pub fn exact(values: &'a [f64]) -> Self {
        Self {
            exact: values,
            perturbation: None,
        }
    }

    pub fn len(&self) -> usize {
        self.exact.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exact.is_empty()
    }

    fn parts(&self) -> impl Iterator<Item = &'a [f64]> {
        std::iter::once(self.exact).chain(self.perturbation)
    }

    /// Materialized noisy values `exact + perturbation`.
    pub fn combined(&self) -> Vec<f64> {
        match self.perturbation {
            None => self.exact.to_vec(),
            Some(p) => self.exact.iter().zip(p).map(|(a, b)| a + b).collect(),
        }
    }
}

/// Accumulates `sign * A(x_tilde, w_tilde)` from split noisy series.
pub fn accumulate_noisy_rm(
    acc: &mut CompensatedSum,
    x: NoisySeries<'_>,
    w: NoisySeries<'_>,
    negate: bool,
) -> Result<()> {
    check_lengths(x.len(), w.len())?;
    for (name, s) in [("x", &x), ("w", &w)] {
        if let Some(p) = s.perturbation {
            if p.len() != s.len() {
                return Err(Error::Contract(format!(
                    "{name} perturbation has {} values, expected {}",
                    p.len(),
                    s.len()
                )));
            }
        }
    }
    for xp in x.parts() {
        for wp in w.parts() {
            accumulate_rm(acc, xp, wp, negate);
        }
    }
    Ok(())
}

fn check_lengths(nx: usize, nw: usize) -> Result<()> {
    if nx == 0 {
        return Err(Error::Contract("quadrature needs at least one step".into()));
    }
    if nx + 1 != nw {
        return Err(Error::Contract(format!(
            "expected {} W values for {nx} X values, got {nw}",
            nx + 1
        )));
    }
    Ok(())
}

/// Quadrature sum over plain slices.
pub fn rm_sum(x: &[f64], w: &[f64]) -> Result<f64> {
    check_lengths(x.len(), w.len())?;
    let mut acc = CompensatedSum::new();
    accumulate_rm(&mut acc, x, w, false);
    Ok(acc.value())
}

/// Noisy information `X~(t_0..t_{n-1})`, `W~(t_0..t_n)` on a mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureInput {
    x_tilde: Vec<f64>,
    w_tilde: Vec<f64>,
    mesh: Mesh,
}

impl QuadratureInput {
    pub fn new(x_tilde: Vec<f64>, w_tilde: Vec<f64>, mesh: Mesh) -> Result<Self> {
        let n = mesh.steps();
        if x_tilde.len() != n || w_tilde.len() != n + 1 {
            return Err(Error::Contract(format!(
                "mesh has {n} steps: need {n} X values and {} W values, got {} and {}",
                n + 1,
                x_tilde.len(),
                w_tilde.len()
            )));
        }
        Ok(Self {
            x_tilde,
            w_tilde,
            mesh,
        })
    }

    pub fn x_tilde(&self) -> &[f64] {
        &self.x_tilde
    }

    pub fn w_tilde(&self) -> &[f64] {
        &self.w_tilde
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Number of noisy evaluations used, `2n + 1`.
    pub fn cost(&self) -> usize {
        self.x_tilde.len() + self.w_tilde.len()
    }
}

pub fn riemann_maruyama(input: &QuadratureInput) -> f64 {
    let mut acc = CompensatedSum::new();
    accumulate_rm(&mut acc, &input.x_tilde, &input.w_tilde, false);
    acc.value()
}
