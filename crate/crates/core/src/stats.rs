//! Error moments, bootstrap standard errors, and power-law slope fits.

use rand::Rng;

use crate::error::{Error, Result};
use crate::quadrature::CompensatedSum;

/// `((1/M) sum |d|^r)^(1/r)`, summed in index order.
pub fn root_mean_moment(diffs: &[f64], r: f64) -> f64 {
    moment_over(diffs, 0..diffs.len(), r)
}

fn moment_over(diffs: &[f64], idx: impl Iterator<Item = usize>, r: f64) -> f64 {
    let mut acc = CompensatedSum::new();
    let mut count = 0usize;
    for i in idx {
        let d = diffs[i].abs();
        if r == 2.0 {
            acc.add_product(d, d);
        } else {
            acc.add(d.powf(r));
        }
        count += 1;
    }
    if count == 0 {
        return 0.0;
    }
    let mean = acc.value() / count as f64;
    if r == 2.0 {
        mean.sqrt()
    } else {
        mean.powf(1.0 / r)
    }
}

/// Compensated mean in index order.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().copied().collect::<CompensatedSum>().value() / values.len() as f64
}

/// Bootstrap standard error of `statistic` over `m` observations.
///
/// `statistic` receives the resampled observation indices.
pub fn bootstrap_stderr<R, F>(m: usize, resamples: usize, rng: &mut R, mut statistic: F) -> f64
where
    R: Rng,
    F: FnMut(&[usize]) -> f64,
{
    if m < 2 || resamples < 2 {
        return 0.0;
    }
    let mut idx = vec![0usize; m];
    let stats: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in idx.iter_mut() {
                *slot = rng.random_range(0..m);
            }
            statistic(&idx)
        })
        .collect();
    let mu = mean(&stats);
    let var = stats
        .iter()
        .map(|s| (s - mu) * (s - mu))
        .collect::<CompensatedSum>()
        .value()
        / (resamples - 1) as f64;
    var.sqrt()
}

/// Bootstrap standard error of [`root_mean_moment`].
pub fn moment_stderr<R: Rng>(diffs: &[f64], r: f64, resamples: usize, rng: &mut R) -> f64 {
    bootstrap_stderr(diffs.len(), resamples, rng, |idx| {
        moment_over(diffs, idx.iter().copied(), r)
    })
}

/// Least-squares slope of `log(error)` against `log(n)`, negated, so an
/// error behaving like `C n^-rho` yields `rho`.
pub fn fit_slope(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 3 {
        return Err(Error::Domain(format!(
            "slope fit needs at least 3 points, got {}",
            pairs.len()
        )));
    }
    if let Some(&(n, e)) = pairs.iter().find(|&&(n, e)| !(n > 0.0 && e > 0.0)) {
        return Err(Error::Domain(format!(
            "slope fit needs positive values, got n = {n}, error = {e}"
        )));
    }
    let k = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain(
            "slope fit needs at least two distinct n".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(-sxy / sxx)
}
