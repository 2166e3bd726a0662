//! Driver processes on a fine grid: two independent Wiener processes and a
//! Poisson arrival stream.
//!
//! A [`TrajectoryBundle`] is generated once on the finest grid an experiment
//! needs. Every coarser quadrature mesh reads the same trajectory through
//! [`subsample`], so the dense reference and the coarse approximation always
//! see identical values at shared points.

use rand::Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Largest fine grid an experiment may allocate per replicate.
pub const DEFAULT_FINE_CAP: usize = 1 << 24;

/// A discretization `0 = t_0 < t_1 < ... < t_n = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    horizon: f64,
    points: Vec<f64>,
}

impl Mesh {
    /// Equidistant mesh `t_i = i T / n`.
    pub fn uniform(horizon: f64, n: usize) -> Result<Self> {
        check_horizon(horizon)?;
        if n == 0 {
            return Err(Error::Domain("mesh needs at least one step".into()));
        }
        let mut points: Vec<f64> = (0..=n).map(|i| i as f64 * horizon / n as f64).collect();
        points[n] = horizon;
        Ok(Self { horizon, points })
    }

    /// Arbitrary mesh; the last point is taken as the horizon.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Domain("mesh needs at least two points".into()));
        }
        if points[0] != 0.0 {
            return Err(Error::Domain(format!(
                "mesh must start at 0, got {}",
                points[0]
            )));
        }
        if let Some(w) = points.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(format!(
                "mesh points must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        let horizon = *points.last().unwrap();
        check_horizon(horizon)?;
        Ok(Self { horizon, points })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Number of steps `n`.
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn step_sizes(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.windows(2).map(|w| w[1] - w[0])
    }

    /// Position of `t` on this mesh, if it is a mesh point up to a few
    /// rounding units.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = alignment_tolerance(self.horizon);
        let i = self.points.partition_point(|&p| p < t - tol);
        (i < self.points.len() && (self.points[i] - t).abs() <= tol).then_some(i)
    }

    /// Fine-grid indices of every point of `coarse`.
    pub fn indices_of(&self, coarse: &Mesh) -> Result<Vec<usize>> {
        if (coarse.horizon - self.horizon).abs() > alignment_tolerance(self.horizon) {
            return Err(Error::Alignment(format!(
                "mesh horizon {} differs from fine horizon {}",
                coarse.horizon, self.horizon
            )));
        }
        let n = coarse.steps();
        let n_fine = self.steps();
        // uniform refinement by an integer factor: plain index arithmetic
        if n_fine.is_multiple_of(n) {
            let k = n_fine / n;
            let tol = alignment_tolerance(self.horizon);
            if coarse
                .points
                .iter()
                .enumerate()
                .all(|(i, &t)| (self.points[i * k] - t).abs() <= tol)
            {
                return Ok((0..=n).map(|i| i * k).collect());
            }
        }
        coarse
            .points
            .iter()
            .map(|&t| {
                self.index_of(t).ok_or_else(|| {
                    Error::Alignment(format!("mesh point {t} is not on the fine grid"))
                })
            })
            .collect()
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon > 0.0 && horizon.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "horizon must be positive and finite, got {horizon}"
        )))
    }
}

fn alignment_tolerance(horizon: f64) -> f64 {
    4.0 * f64::EPSILON * horizon.max(1.0)
}

/// Which Wiener channel to read from a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    W,
    W2,
}

/// Cumulative sums of `n_fine` independent `N(0, T/n_fine)` increments,
/// starting at exactly 0.
pub fn sample_wiener_fine(
    seed: u64,
    replicate: u64,
    stream_tag: u64,
    n_fine: usize,
    horizon: f64,
) -> Result<Vec<f64>> {
    if n_fine == 0 {
        return Err(Error::Domain("n_fine must be at least 1".into()));
    }
    check_horizon(horizon)?;
    let scale = (horizon / n_fine as f64).sqrt();
    let mut rng = rng::stream(seed, replicate, stream_tag);
    let mut values = Vec::with_capacity(n_fine + 1);
    let mut w = 0.0;
    values.push(w);
    for _ in 0..n_fine {
        let z: f64 = rng.sample(StandardNormal);
        w += scale * z;
        values.push(w);
    }
    Ok(values)
}

/// Arrival times of a Poisson process with the given intensity on `[0, T]`.
pub fn sample_poisson_arrivals(
    seed: u64,
    replicate: u64,
    stream_tag: u64,
    intensity: f64,
    horizon: f64,
) -> Result<Vec<f64>> {
    if !(intensity > 0.0 && intensity.is_finite()) {
        return Err(Error::Domain(format!(
            "intensity must be positive, got {intensity}"
        )));
    }
    check_horizon(horizon)?;
    let gaps = Exp::new(intensity).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = rng::stream(seed, replicate, stream_tag);
    Ok(arrivals_from_gaps((&mut rng).sample_iter(gaps), horizon))
}

/// Accumulates inter-arrival gaps until the horizon is passed.
pub fn arrivals_from_gaps(gaps: impl IntoIterator<Item = f64>, horizon: f64) -> Vec<f64> {
    let mut arrivals = Vec::new();
    let mut t = 0.0;
    for gap in gaps {
        t += gap;
        if t > horizon {
            break;
        }
        // a zero gap would break strict monotonicity
        if arrivals.last().is_some_and(|&last| t <= last) {
            continue;
        }
        arrivals.push(t);
    }
    arrivals
}

/// Right-continuous counting function `N(t)`.
pub fn evaluate_count(arrivals: &[f64], t: f64, horizon: f64) -> Result<usize> {
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, {horizon}]")));
    }
    Ok(count_up_to(arrivals, t))
}

#[inline]
pub(crate) fn count_up_to(arrivals: &[f64], t: f64) -> usize {
    arrivals.partition_point(|&a| a <= t)
}

/// What a bundle must contain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleSpec {
    pub n_fine: usize,
    pub horizon: f64,
    /// Generate the second Wiener process.
    pub with_w2: bool,
    /// Poisson intensity, when arrivals are needed.
    pub intensity: Option<f64>,
}

impl BundleSpec {
    pub fn full(n_fine: usize, horizon: f64, intensity: f64) -> Self {
        Self {
            n_fine,
            horizon,
            with_w2: true,
            intensity: Some(intensity),
        }
    }
}

/// One realization of all driver processes on a fine grid.
///
/// Channels not requested in the [`BundleSpec`] are absent; asking for them
/// is a contract error rather than a silent zero path.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    fine_mesh: Mesh,
    w: Vec<f64>,
    w2: Option<Vec<f64>>,
    arrivals: Option<Vec<f64>>,
    seed: u64,
    replicate: u64,
}

impl TrajectoryBundle {
    pub fn generate(spec: &BundleSpec, seed: u64, replicate: u64) -> Result<Self> {
        let fine_mesh = Mesh::uniform(spec.horizon, spec.n_fine)?;
        let w = sample_wiener_fine(seed, replicate, tag::WIENER, spec.n_fine, spec.horizon)?;
        let w2 = spec
            .with_w2
            .then(|| sample_wiener_fine(seed, replicate, tag::WIENER2, spec.n_fine, spec.horizon))
            .transpose()?;
        let arrivals = spec
            .intensity
            .map(|lambda| {
                sample_poisson_arrivals(seed, replicate, tag::POISSON, lambda, spec.horizon)
            })
            .transpose()?;
        Ok(Self {
            fine_mesh,
            w,
            w2,
            arrivals,
            seed,
            replicate,
        })
    }

    /// Assembles a bundle from given paths (tests, bindings).
    pub fn from_parts(
        fine_mesh: Mesh,
        w: Vec<f64>,
        w2: Option<Vec<f64>>,
        arrivals: Option<Vec<f64>>,
    ) -> Result<Self> {
        let len = fine_mesh.points().len();
        for (name, path) in [("W", Some(&w)), ("W2", w2.as_ref())] {
            if let Some(path) = path {
                if path.len() != len {
                    return Err(Error::Contract(format!(
                        "{name} has {} values, fine mesh has {len} points",
                        path.len()
                    )));
                }
                if path[0] != 0.0 {
                    return Err(Error::Contract(format!("{name} must start at 0")));
                }
            }
        }
        if let Some(a) = &arrivals {
            let horizon = fine_mesh.horizon();
            if a.windows(2).any(|p| !(p[1] > p[0]))
                || a.iter().any(|&t| !(0.0..=horizon).contains(&t))
            {
                return Err(Error::Contract(
                    "arrivals must be strictly increasing in [0, T]".into(),
                ));
            }
        }
        Ok(Self {
            fine_mesh,
            w,
            w2,
            arrivals,
            seed: 0,
            replicate: 0,
        })
    }

    pub fn fine_mesh(&self) -> &Mesh {
        &self.fine_mesh
    }

    pub fn horizon(&self) -> f64 {
        self.fine_mesh.horizon()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replicate(&self) -> u64 {
        self.replicate
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn w2(&self) -> Result<&[f64]> {
        self.w2
            .as_deref()
            .ok_or_else(|| Error::Contract("bundle was generated without W2".into()))
    }

    pub fn arrivals(&self) -> Result<&[f64]> {
        self.arrivals
            .as_deref()
            .ok_or_else(|| Error::Contract("bundle was generated without Poisson arrivals".into()))
    }

    pub fn channel(&self, channel: Channel) -> Result<&[f64]> {
        match channel {
            Channel::W => Ok(&self.w),
            Channel::W2 => self.w2(),
        }
    }
}

/// Values of one Wiener channel at exactly the points of `mesh`.
pub fn subsample(bundle: &TrajectoryBundle, mesh: &Mesh, channel: Channel) -> Result<Vec<f64>> {
    let values = bundle.channel(channel)?;
    let idx = bundle.fine_mesh().indices_of(mesh)?;
    Ok(idx.into_iter().map(|i| values[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_mesh_endpoints() {
        let m = Mesh::uniform(3.0, 7).unwrap();
        assert_eq!(m.points()[0], 0.0);
        assert_eq!(*m.points().last().unwrap(), 3.0);
        assert_eq!(m.steps(), 7);
        for (i, &t) in m.points().iter().enumerate() {
            let exact = i as f64 * 3.0 / 7.0;
            assert!((t - exact).abs() <= f64::EPSILON * 3.0);
        }
    }

    #[test]
    fn mesh_rejects_bad_points() {
        assert!(Mesh::uniform(1.0, 0).is_err());
        assert!(Mesh::uniform(0.0, 4).is_err());
        assert!(Mesh::from_points(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(Mesh::from_points(vec![0.1, 1.0]).is_err());
        assert!(Mesh::from_points(vec![0.0]).is_err());
        assert!(Mesh::from_points(vec![0.0, 0.3, 1.0]).is_ok());
    }

    #[test]
    fn single_step_path() {
        let w = sample_wiener_fine(11, 0, tag::WIENER, 1, 1.0).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0], 0.0);
        assert!(w[1].is_finite());
    }

    #[test]
    fn wiener_is_deterministic() {
        let a = sample_wiener_fine(5, 9, tag::WIENER, 64, 2.0).unwrap();
        let b = sample_wiener_fine(5, 9, tag::WIENER, 64, 2.0).unwrap();
        assert_eq!(a, b);
        let c = sample_wiener_fine(5, 9, tag::WIENER2, 64, 2.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn wiener_domain_errors() {
        assert!(matches!(
            sample_wiener_fine(0, 0, 0, 0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            sample_wiener_fine(0, 0, 0, 4, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            sample_wiener_fine(0, 0, 0, 4, -1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn subsample_identity_and_stride() {
        let spec = BundleSpec {
            n_fine: 4,
            horizon: 1.0,
            with_w2: true,
            intensity: None,
        };
        let b = TrajectoryBundle::generate(&spec, 1, 0).unwrap();
        let fine = b.fine_mesh().clone();
        assert_eq!(subsample(&b, &fine, Channel::W).unwrap(), b.w());
        let coarse = Mesh::uniform(1.0, 2).unwrap();
        let got = subsample(&b, &coarse, Channel::W2).unwrap();
        let w2 = b.w2().unwrap();
        assert_eq!(got, vec![w2[0], w2[2], w2[4]]);
    }

    #[test]
    fn subsample_nonuniform_and_misaligned() {
        let spec = BundleSpec {
            n_fine: 10,
            horizon: 1.0,
            with_w2: false,
            intensity: None,
        };
        let b = TrajectoryBundle::generate(&spec, 2, 0).unwrap();
        let m = Mesh::from_points(vec![0.0, 0.3, 0.4, 1.0]).unwrap();
        let got = subsample(&b, &m, Channel::W).unwrap();
        assert_eq!(got, vec![b.w()[0], b.w()[3], b.w()[4], b.w()[10]]);
        let bad = Mesh::from_points(vec![0.0, 0.25, 1.0]).unwrap();
        assert!(matches!(
            subsample(&b, &bad, Channel::W),
            Err(Error::Alignment(_))
        ));
        let bad = Mesh::uniform(1.0, 3).unwrap();
        assert!(matches!(
            subsample(&b, &bad, Channel::W),
            Err(Error::Alignment(_))
        ));
        assert!(matches!(
            subsample(&b, &m, Channel::W2),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn coarse_and_reference_share_points() {
        let spec = BundleSpec {
            n_fine: 10 * 1000,
            horizon: 1.0,
            with_w2: false,
            intensity: None,
        };
        let b = TrajectoryBundle::generate(&spec, 3, 1).unwrap();
        let coarse = subsample(&b, &Mesh::uniform(1.0, 10).unwrap(), Channel::W).unwrap();
        let reference = subsample(&b, b.fine_mesh(), Channel::W).unwrap();
        for (i, v) in coarse.iter().enumerate() {
            assert_eq!(*v, reference[i * 1000]);
        }
    }

    #[test]
    fn counting_function() {
        let a = [0.2, 0.7];
        assert_eq!(evaluate_count(&a, 0.5, 1.0).unwrap(), 1);
        assert_eq!(evaluate_count(&a, 0.7, 1.0).unwrap(), 2);
        assert_eq!(evaluate_count(&a, 0.0, 1.0).unwrap(), 0);
        assert_eq!(evaluate_count(&[], 0.9, 1.0).unwrap(), 0);
        assert!(matches!(
            evaluate_count(&a, 1.5, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            evaluate_count(&a, -0.1, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn no_arrivals_when_first_gap_is_past_horizon() {
        assert!(arrivals_from_gaps([1.5, 0.1, 0.1], 1.0).is_empty());
        assert_eq!(arrivals_from_gaps([0.25, 0.5, 0.5], 1.0), vec![0.25, 0.75]);
    }

    #[test]
    fn poisson_rejects_bad_intensity() {
        assert!(matches!(
            sample_poisson_arrivals(0, 0, 2, 0.0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            sample_poisson_arrivals(0, 0, 2, -3.0, 1.0),
            Err(Error::Domain(_))
        ));
        let a = sample_poisson_arrivals(0, 0, 2, 5.0, 1.0).unwrap();
        assert_eq!(a, sample_poisson_arrivals(0, 0, 2, 5.0, 1.0).unwrap());
        assert!(a.windows(2).all(|p| p[1] > p[0]));
        assert!(a.iter().all(|&t| (0.0..=1.0).contains(&t)));
    }

    #[test]
    fn from_parts_checks_shapes() {
        let m = Mesh::uniform(1.0, 2).unwrap();
        assert!(TrajectoryBundle::from_parts(m.clone(), vec![0.0, 1.0], None, None).is_err());
        assert!(TrajectoryBundle::from_parts(m.clone(), vec![1.0, 1.0, 1.0], None, None).is_err());
        assert!(
            TrajectoryBundle::from_parts(m.clone(), vec![0.0; 3], None, Some(vec![0.5, 0.2]))
                .is_err()
        );
        let b =
            TrajectoryBundle::from_parts(m, vec![0.0, 0.1, 0.2], None, Some(vec![0.2])).unwrap();
        assert!(b.w2().is_err());
        assert_eq!(b.arrivals().unwrap(), &[0.2]);
    }
}
