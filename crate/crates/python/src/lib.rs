//! Python bindings: densities, the KS test, and scenario runs.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;

use coopest_core::density::{self, DEFAULT_GRID_SIZE};
use coopest_core::harness::{self, Format, SweepAxis};
use coopest_core::seed::SimRng;
use coopest_core::{stats, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Invariant(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Density tabulated on an evenly spaced grid over [0, 1].
#[pyclass(name = "DensityGrid", module = "coopest", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyDensityGrid(pub density::DensityGrid);

#[pymethods]
impl PyDensityGrid {
    /// Normalizes `values` to unit trapezoid mass.
    #[new]
    fn new(values: Vec<f64>) -> PyResult<Self> {
        density::DensityGrid::normalized(values)
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (grid_size = DEFAULT_GRID_SIZE))]
    fn uniform(grid_size: usize) -> PyResult<Self> {
        density::DensityGrid::uniform(grid_size)
            .map(Self)
            .map_err(to_py)
    }

    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    #[getter]
    fn grid_size(&self) -> usize {
        self.0.grid_size()
    }

    fn integral(&self) -> f64 {
        self.0.integral()
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn cdf(&self, x: f64) -> f64 {
        self.0.cdf(x)
    }

    fn __len__(&self) -> usize {
        self.0.grid_size()
    }

    fn __repr__(&self) -> String {
        format!(
            "DensityGrid(grid_size={}, mean={:.6})",
            self.0.grid_size(),
            self.0.mean()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (samples, grid_size = DEFAULT_GRID_SIZE))]
fn kde_estimate(samples: Vec<f64>, grid_size: usize) -> PyResult<PyDensityGrid> {
    density::kde_estimate(&samples, grid_size)
        .map(PyDensityGrid)
        .map_err(to_py)
}

#[pyfunction]
fn kl_divergence(p: &PyDensityGrid, q: &PyDensityGrid) -> PyResult<f64> {
    density::kl_divergence(&p.0, &q.0).map_err(to_py)
}

#[pyfunction]
fn mix(components: Vec<PyDensityGrid>, weights: Vec<f64>) -> PyResult<PyDensityGrid> {
    let refs: Vec<&density::DensityGrid> = components.iter().map(|c| &c.0).collect();
    density::mix(&refs, &weights)
        .map(PyDensityGrid)
        .map_err(to_py)
}

#[pyfunction]
fn sample_density(d: &PyDensityGrid, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = SimRng::seed_from_u64(seed);
    density::sample_density(&d.0, n, &mut rng)
}

#[pyfunction]
fn ks_statistic(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    stats::ks_statistic(&a, &b).map_err(to_py)
}

#[pyfunction]
fn ks_critical(eta: f64) -> PyResult<f64> {
    stats::ks_critical(eta).map_err(to_py)
}

/// Returns `(statistic, scaled, critical, accepted)`.
#[pyfunction]
fn ks_two_sample_test(a: Vec<f64>, b: Vec<f64>, eta: f64) -> PyResult<(f64, f64, f64, bool)> {
    let r = stats::ks_two_sample_test(&a, &b, eta).map_err(to_py)?;
    Ok((r.statistic, r.scaled, r.critical, r.accepted))
}

#[pyclass(name = "ScenarioConfig", module = "coopest", from_py_object)]
#[derive(Clone)]
pub struct PyScenarioConfig(pub harness::ScenarioConfig);

#[pymethods]
impl PyScenarioConfig {
    #[new]
    fn new() -> Self {
        Self(harness::ScenarioConfig::default())
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        harness::ScenarioConfig::from_toml_str(text)
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        harness::ScenarioConfig::load(path.as_ref())
            .map(Self)
            .map_err(to_py)
    }

    fn to_toml(&self) -> String {
        self.0.to_toml_string()
    }

    fn validate(&self) -> PyResult<()> {
        self.0.validate().map_err(to_py)
    }

    #[getter]
    fn get_seed(&self) -> u64 {
        self.0.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.0.seed = v;
    }

    #[getter]
    fn get_runs(&self) -> usize {
        self.0.runs
    }

    #[setter]
    fn set_runs(&mut self, v: usize) {
        self.0.runs = v;
    }

    #[getter]
    fn get_n_nodes(&self) -> usize {
        self.0.network.n_nodes
    }

    #[setter]
    fn set_n_nodes(&mut self, v: usize) {
        self.0.network.n_nodes = v;
    }

    #[getter]
    fn get_n_sources(&self) -> usize {
        self.0.network.n_sources
    }

    #[setter]
    fn set_n_sources(&mut self, v: usize) {
        self.0.network.n_sources = v;
    }

    #[getter]
    fn get_kappa(&self) -> f64 {
        self.0.game.kappa
    }

    #[setter]
    fn set_kappa(&mut self, v: f64) {
        self.0.game.kappa = v;
    }

    fn __repr__(&self) -> String {
        format!(
            "ScenarioConfig(seed={}, runs={}, n_nodes={}, n_sources={}, kappa={})",
            self.0.seed,
            self.0.runs,
            self.0.network.n_nodes,
            self.0.network.n_sources,
            self.0.game.kappa
        )
    }
}

/// Result of one replicate.
#[pyclass(name = "RunMetrics", module = "coopest", frozen, get_all)]
pub struct PyRunMetrics {
    seed: u64,
    n_nodes: usize,
    coop_kl_mean: f64,
    noncoop_kl_mean: f64,
    improvement_pct: f64,
    n_coalitions: usize,
    coalition_size_mean: f64,
    coalition_size_max: usize,
    joins_total: usize,
    iterations: usize,
    welfare_final: f64,
    /// Final coalitions as lists of node indices.
    coalitions: Vec<Vec<usize>>,
    json: String,
}

#[pymethods]
impl PyRunMetrics {
    fn to_json(&self) -> String {
        self.json.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "RunMetrics(seed={}, coop_kl_mean={:.6}, noncoop_kl_mean={:.6}, n_coalitions={})",
            self.seed, self.coop_kl_mean, self.noncoop_kl_mean, self.n_coalitions
        )
    }
}

impl From<harness::RunMetrics> for PyRunMetrics {
    fn from(m: harness::RunMetrics) -> Self {
        PyRunMetrics {
            seed: m.seed,
            n_nodes: m.n_nodes,
            coop_kl_mean: m.coop_kl_mean,
            noncoop_kl_mean: m.noncoop_kl_mean,
            improvement_pct: m.improvement_pct,
            n_coalitions: m.n_coalitions,
            coalition_size_mean: m.coalition_size_mean,
            coalition_size_max: m.coalition_size_max,
            joins_total: m.joins_total,
            iterations: m.iterations,
            welfare_final: m.welfare_final,
            coalitions: m
                .partition
                .coalitions()
                .iter()
                .map(|c| c.members().iter().map(|n| n.0).collect())
                .collect(),
            json: serde_json::to_string(&m).expect("metrics serialize"),
        }
    }
}

#[pyfunction]
fn run_scenario(py: Python<'_>, config: &PyScenarioConfig) -> PyResult<PyRunMetrics> {
    let cfg = config.0.clone();
    py.detach(move || harness::run_scenario(&cfg))
        .map(PyRunMetrics::from)
        .map_err(to_py)
}

/// Replicates of one configuration, rendered as a metric file.
#[pyfunction]
#[pyo3(signature = (config, format = "csv"))]
fn simulate(py: Python<'_>, config: &PyScenarioConfig, format: &str) -> PyResult<String> {
    let format: Format = format.parse().map_err(to_py)?;
    let cfg = config.0.clone();
    let table = py.detach(move || harness::simulate(&cfg)).map_err(to_py)?;
    Ok(harness::render_metrics(&table, format))
}

/// Replicates at every value of `axis`, rendered as a metric file.
#[pyfunction]
#[pyo3(signature = (config, axis, values, format = "csv"))]
fn sweep(
    py: Python<'_>,
    config: &PyScenarioConfig,
    axis: &str,
    values: Vec<f64>,
    format: &str,
) -> PyResult<String> {
    let format: Format = format.parse().map_err(to_py)?;
    let axis: SweepAxis = axis.parse().map_err(to_py)?;
    let cfg = config.0.clone();
    let table = py
        .detach(move || harness::sweep(&cfg, axis, &values))
        .map_err(to_py)?;
    Ok(harness::render_metrics(&table, format))
}

/// Returns `(stable, coalitions)` for the formed partition.
#[pyfunction]
fn stability_check(py: Python<'_>, config: &PyScenarioConfig) -> PyResult<(bool, Vec<Vec<usize>>)> {
    let cfg = config.0.clone();
    let report = py
        .detach(move || harness::stability_check(&cfg))
        .map_err(to_py)?;
    let coalitions = report
        .partition
        .coalitions()
        .iter()
        .map(|c| c.members().iter().map(|n| n.0).collect())
        .collect();
    Ok((report.passed(), coalitions))
}

#[pymodule]
fn coopest(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDensityGrid>()?;
    m.add_class::<PyScenarioConfig>()?;
    m.add_class::<PyRunMetrics>()?;
    m.add_function(wrap_pyfunction!(kde_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(mix, m)?)?;
    m.add_function(wrap_pyfunction!(sample_density, m)?)?;
    m.add_function(wrap_pyfunction!(ks_statistic, m)?)?;
    m.add_function(wrap_pyfunction!(ks_critical, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample_test, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(stability_check, m)?)?;
    m.add("CSV_HEADER", harness::CSV_HEADER)?;
    Ok(())
}
