use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use noisy_ito::cli::RunManifest;
use noisy_ito::{
    experiments, integrands, noise, paths, quadrature, stats, DeltaCoupling, DisturbanceFunction,
    ErrorReport, ExperimentConfig, Integrand, Payoff, Regime,
};

create_exception!(noisy_ito_py, NoisyItoError, PyException);

fn err(e: noisy_ito::Error) -> PyErr {
    NoisyItoError::new_err(e.to_string())
}

fn disturbance(name: &str) -> PyResult<DisturbanceFunction> {
    name.parse().map_err(err)
}

fn to_py_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn report_to_py<'py>(py: Python<'py>, report: &ErrorReport) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(report).map_err(|e| NoisyItoError::new_err(e.to_string()))?;
    to_py_json(py, &text)
}

#[pyclass(name = "Mesh", module = "noisy_ito_py", from_py_object)]
#[derive(Clone)]
struct PyMesh(paths::Mesh);

#[pymethods]
impl PyMesh {
    #[new]
    fn new(points: Vec<f64>) -> PyResult<Self> {
        paths::Mesh::from_points(points).map(Self).map_err(err)
    }

    #[staticmethod]
    fn uniform(horizon: f64, n: usize) -> PyResult<Self> {
        paths::Mesh::uniform(horizon, n).map(Self).map_err(err)
    }

    #[getter]
    fn points(&self) -> Vec<f64> {
        self.0.points().to_vec()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.0.horizon()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.steps()
    }

    fn __len__(&self) -> usize {
        self.0.points().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh(horizon={}, steps={})",
            self.0.horizon(),
            self.0.steps()
        )
    }
}

#[pyclass(name = "NoiseSpec", module = "noisy_ito_py", from_py_object)]
#[derive(Clone)]
struct PyNoiseSpec(noise::NoiseSpec);

#[pymethods]
impl PyNoiseSpec {
    #[new]
    #[pyo3(signature = (delta1=0.0, delta2=0.0, p_x="one", p_w="one"))]
    fn new(delta1: f64, delta2: f64, p_x: &str, p_w: &str) -> PyResult<Self> {
        let spec = noise::NoiseSpec::new(delta1, disturbance(p_x)?, delta2, disturbance(p_w)?);
        spec.validate().map_err(err)?;
        Ok(Self(spec))
    }

    #[getter]
    fn delta1(&self) -> f64 {
        self.0.delta1
    }

    #[getter]
    fn delta2(&self) -> f64 {
        self.0.delta2
    }

    #[getter]
    fn p_x(&self) -> String {
        self.0.p_x.name().to_string()
    }

    #[getter]
    fn p_w(&self) -> String {
        self.0.p_w.name().to_string()
    }

    fn is_exact(&self) -> bool {
        self.0.is_exact()
    }

    fn perturb_x(&self, x: f64, t: f64) -> f64 {
        noise::perturb_x(x, t, &self.0)
    }

    fn perturb_w(&self, w: f64, t: f64) -> f64 {
        noise::perturb_w(w, t, &self.0)
    }

    fn __repr__(&self) -> String {
        format!(
            "NoiseSpec(delta1={}, delta2={}, p_x='{}', p_w='{}')",
            self.0.delta1,
            self.0.delta2,
            self.0.p_x.name(),
            self.0.p_w.name()
        )
    }
}

/// Riemann-Maruyama sum of `x` (n values) against `w` (n + 1 values).
#[pyfunction]
#[pyo3(signature = (x, w, mesh=None))]
fn riemann_maruyama(x: Vec<f64>, w: Vec<f64>, mesh: Option<PyMesh>) -> PyResult<f64> {
    match mesh {
        Some(m) => {
            let input = quadrature::QuadratureInput::new(x, w, m.0).map_err(err)?;
            Ok(quadrature::riemann_maruyama(&input))
        }
        None => quadrature::rm_sum(&x, &w).map_err(err),
    }
}

#[pyfunction]
#[pyo3(signature = (w_t, horizon=1.0))]
fn exact_integral_x1(w_t: f64, horizon: f64) -> f64 {
    integrands::exact_integral_x1(w_t, horizon)
}

#[pyfunction]
fn payoff(x: f64, strike: f64) -> f64 {
    integrands::payoff(x, strike)
}

#[pyfunction]
fn disturbance_eval(name: &str, t: f64, x: f64) -> PyResult<f64> {
    Ok(disturbance(name)?.eval(t, x))
}

/// Negated log-log slope of `(n, error)` pairs.
#[pyfunction]
fn fit_slope(pairs: Vec<(f64, f64)>) -> PyResult<f64> {
    stats::fit_slope(&pairs).map_err(err)
}

/// Wiener path on a uniform `n`-step mesh, as generated for replicate `replicate`.
#[pyfunction]
#[pyo3(signature = (n, seed, replicate=0, horizon=1.0))]
fn sample_wiener(n: usize, seed: u64, replicate: u64, horizon: f64) -> PyResult<Vec<f64>> {
    paths::sample_wiener_fine(seed, replicate, noisy_ito::rng::tag::WIENER, n, horizon).map_err(err)
}

#[allow(clippy::too_many_arguments)]
fn build_config(
    problem: &str,
    n_list: Vec<usize>,
    replicates: usize,
    l_ref: usize,
    noise: Option<PyNoiseSpec>,
    seed: u64,
    horizon: f64,
    r: f64,
    coupled: bool,
    threads: Option<usize>,
) -> PyResult<ExperimentConfig> {
    let problem: Integrand = problem.parse().map_err(err)?;
    let mut cfg = ExperimentConfig::new(problem, n_list)
        .with_replicates(replicates)
        .with_l_ref(l_ref)
        .with_seed(seed);
    cfg.horizon = horizon;
    cfg.r = r;
    if let Some(n) = noise {
        cfg = cfg.with_noise(n.0);
    }
    if coupled {
        cfg = cfg.with_coupling(DeltaCoupling::InvSqrtN);
    }
    if let Some(t) = threads {
        cfg = cfg.with_threads(t);
    }
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// Strong error report as a dict (closed form for x1, reference mesh otherwise).
#[pyfunction]
#[pyo3(signature = (problem, n_list, replicates=2048, l_ref=1000, noise=None, seed=experiments::DEFAULT_SEED, horizon=1.0, r=2.0, coupled=false, threads=None))]
#[allow(clippy::too_many_arguments)]
fn strong_error<'py>(
    py: Python<'py>,
    problem: &str,
    n_list: Vec<usize>,
    replicates: usize,
    l_ref: usize,
    noise: Option<PyNoiseSpec>,
    seed: u64,
    horizon: f64,
    r: f64,
    coupled: bool,
    threads: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = build_config(
        problem, n_list, replicates, l_ref, noise, seed, horizon, r, coupled, threads,
    )?;
    let report = py.detach(|| experiments::strong_error(&cfg)).map_err(err)?;
    report_to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (problem, n_list, strike=experiments::DEFAULT_STRIKE_WEAK, replicates=2048, l_ref=1000, noise=None, seed=experiments::DEFAULT_SEED, horizon=1.0, threads=None))]
#[allow(clippy::too_many_arguments)]
fn weak_error<'py>(
    py: Python<'py>,
    problem: &str,
    n_list: Vec<usize>,
    strike: f64,
    replicates: usize,
    l_ref: usize,
    noise: Option<PyNoiseSpec>,
    seed: u64,
    horizon: f64,
    threads: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = build_config(
        problem, n_list, replicates, l_ref, noise, seed, horizon, 2.0, false, threads,
    )?;
    let report = py
        .detach(|| experiments::weak_error(&cfg, Payoff::Put { strike }))
        .map_err(err)?;
    report_to_py(py, &report)
}

/// One report per precision level (`floor`), or a single report
/// (`coupled`, `blowup`).
#[pyfunction]
#[pyo3(signature = (problem, n_list, regime="floor", deltas=None, delta2=1e-2, p_x="one", p_w="one", replicates=2048, l_ref=1000, seed=experiments::DEFAULT_SEED))]
#[allow(clippy::too_many_arguments)]
fn noise_regime_sweep<'py>(
    py: Python<'py>,
    problem: &str,
    n_list: Vec<usize>,
    regime: &str,
    deltas: Option<Vec<f64>>,
    delta2: f64,
    p_x: &str,
    p_w: &str,
    replicates: usize,
    l_ref: usize,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyAny>>> {
    let regime = match regime {
        "floor" => match deltas {
            Some(deltas) => Regime::Floor { deltas },
            None => Regime::default_floor(),
        },
        "coupled" => Regime::Coupled,
        "blowup" => Regime::Blowup { delta2 },
        other => return Err(NoisyItoError::new_err(format!("unknown regime '{other}'"))),
    };
    let noise = PyNoiseSpec(noise::NoiseSpec::new(
        0.0,
        disturbance(p_x)?,
        0.0,
        disturbance(p_w)?,
    ));
    let cfg = build_config(
        problem,
        n_list,
        replicates,
        l_ref,
        Some(noise),
        seed,
        1.0,
        2.0,
        false,
        None,
    )?;
    let reports = py
        .detach(|| experiments::noise_regime_sweep(&cfg, &regime))
        .map_err(err)?;
    reports.iter().map(|r| report_to_py(py, r)).collect()
}

/// Runs a TOML manifest and returns the rendered CSV or JSON text.
#[pyfunction]
fn run_manifest(py: Python<'_>, toml_text: &str) -> PyResult<String> {
    let manifest = RunManifest::from_toml(toml_text).map_err(err)?;
    py.detach(|| manifest.run()).map_err(err)
}

#[pymodule]
fn noisy_ito_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NoisyItoError", m.py().get_type::<NoisyItoError>())?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyNoiseSpec>()?;
    m.add_function(wrap_pyfunction!(riemann_maruyama, m)?)?;
    m.add_function(wrap_pyfunction!(exact_integral_x1, m)?)?;
    m.add_function(wrap_pyfunction!(payoff, m)?)?;
    m.add_function(wrap_pyfunction!(disturbance_eval, m)?)?;
    m.add_function(wrap_pyfunction!(fit_slope, m)?)?;
    m.add_function(wrap_pyfunction!(sample_wiener, m)?)?;
    m.add_function(wrap_pyfunction!(strong_error, m)?)?;
    m.add_function(wrap_pyfunction!(weak_error, m)?)?;
    m.add_function(wrap_pyfunction!(noise_regime_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_manifest, m)?)?;
    Ok(())
}
