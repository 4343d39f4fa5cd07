//! Python module `tsd`: bi-signal models, detection estimators, quantum
//! reference values and the experiment presets.
//!
//! Matrices cross the boundary as lists of rows of Python `complex`.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tsd_core::coincidence::{self, CoincidenceMode, CoincidenceParams};
use tsd_core::detector::{self, CountingMode};
use tsd_core::harness::{self, Experiment, ExperimentConfig, Overrides};
use tsd_core::linalg::CMatrix;
use tsd_core::{model, oracle, quadratic, RunParams, Side, TsdError};

fn err(e: TsdError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: &[Vec<Complex64>]) -> PyResult<CMatrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err(
            "expected a non-empty square matrix given as a list of rows",
        ));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn to_rows(m: &CMatrix) -> Vec<Vec<Complex64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn side(k: u8) -> PyResult<Side> {
    match k {
        1 => Ok(Side::One),
        2 => Ok(Side::Two),
        _ => Err(PyValueError::new_err(format!("side must be 1 or 2, got {k}"))),
    }
}

fn run(trials: u64, seed: u64, workers: usize) -> RunParams {
    RunParams::new(trials, seed).with_workers(workers)
}

/// Law of a bi-signal: cross-correlation matrix, side powers and background.
#[pyclass(name = "CorrelationModel", frozen)]
struct PyModel {
    inner: model::CorrelationModel,
}

#[pymethods]
impl PyModel {
    /// Matrix-matched model from a square cross-correlation matrix.
    #[staticmethod]
    fn matrix(sigma12: Vec<Vec<Complex64>>, e0: f64) -> PyResult<Self> {
        let inner = model::build_matrix_model(to_matrix(&sigma12)?, e0).map_err(err)?;
        Ok(Self { inner })
    }

    /// One channel per side with cross-correlation `cross`.
    #[staticmethod]
    fn scalar(cross: Complex64, e0: f64) -> PyResult<Self> {
        let inner = model::build_scalar_pair_model(cross, e0).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (e0, scale = 1.0))]
    fn singlet(e0: f64, scale: f64) -> PyResult<Self> {
        let inner = model::singlet_model(e0, scale).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn background(&self) -> f64 {
        self.inner.background()
    }

    #[getter]
    fn cross(&self) -> Vec<Vec<Complex64>> {
        to_rows(self.inner.cross())
    }

    fn side_power(&self, side_index: u8) -> PyResult<Vec<Vec<Complex64>>> {
        Ok(to_rows(self.inner.side_power(side(side_index)?)))
    }

    fn total_cross_power(&self) -> f64 {
        self.inner.total_cross_power()
    }

    /// Covariance of the 2m components at time `s`.
    fn per_bin_covariance(&self, s: f64) -> Vec<Vec<Complex64>> {
        to_rows(&self.inner.per_bin_covariance(s).matrix)
    }

    fn rotate_bases(&self, theta1: f64, theta2: f64) -> PyResult<Self> {
        let inner = self.inner.rotate_bases(theta1, theta2).map_err(err)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "CorrelationModel(dim={}, e0={}, cross_power={})",
            self.inner.dim(),
            self.inner.background(),
            self.inner.total_cross_power()
        )
    }
}

#[pyclass(name = "DetectorParams", frozen)]
struct PyDetector {
    inner: detector::DetectorParams,
}

#[pymethods]
impl PyDetector {
    /// `max_time` defaults to 10⁴·κ.
    #[new]
    #[pyo3(signature = (kappa = 0.04, threshold = 50.0, background = 0.0, max_time = None))]
    fn new(kappa: f64, threshold: f64, background: f64, max_time: Option<f64>) -> PyResult<Self> {
        let inner = detector::DetectorParams::new(kappa, threshold, background, max_time.unwrap_or(1e4 * kappa))
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold
    }

    #[getter]
    fn background(&self) -> f64 {
        self.inner.background
    }

    #[getter]
    fn max_time(&self) -> f64 {
        self.inner.max_time
    }

    fn __repr__(&self) -> String {
        let d = &self.inner;
        format!(
            "DetectorParams(kappa={}, threshold={}, background={}, max_time={})",
            d.kappa, d.threshold, d.background, d.max_time
        )
    }
}

/// Click statistics with their reference probabilities.
#[pyclass(name = "ProbabilityReport", frozen, get_all)]
struct PyReport {
    labels: Vec<String>,
    counts: Vec<u64>,
    probabilities: Vec<f64>,
    std_errors: Vec<f64>,
    oracle: Vec<f64>,
    mean_tau: f64,
    mean_tau_se: f64,
    trials: u64,
    no_clicks: u64,
}

impl From<detector::ProbabilityReport> for PyReport {
    fn from(r: detector::ProbabilityReport) -> Self {
        Self {
            labels: r.labels,
            counts: r.counts,
            probabilities: r.probabilities,
            std_errors: r.std_errors,
            oracle: r.oracle,
            mean_tau: r.mean_tau,
            mean_tau_se: r.mean_tau_se,
            trials: r.trials,
            no_clicks: r.no_clicks,
        }
    }
}

#[pymethods]
impl PyReport {
    fn max_discrepancy(&self) -> f64 {
        self.probabilities
            .iter()
            .zip(&self.oracle)
            .map(|(p, o)| (p - o).abs())
            .fold(0.0, f64::max)
    }

    fn __repr__(&self) -> String {
        format!(
            "ProbabilityReport(labels={:?}, probabilities={:?}, oracle={:?})",
            self.labels, self.probabilities, self.oracle
        )
    }
}

fn counting_mode(mode: &str) -> PyResult<CountingMode> {
    match mode {
        "race" => Ok(CountingMode::Race),
        "per-channel" => Ok(CountingMode::PerChannel),
        _ => Err(PyValueError::new_err(format!(
            "mode must be race or per-channel, got {mode}"
        ))),
    }
}

fn coincidence_params(det: &PyDetector, window: f64, mode: &str) -> PyResult<CoincidenceParams> {
    let mode = match mode {
        "per-pair" => CoincidenceMode::PerPair,
        "race" => CoincidenceMode::Race,
        _ => {
            return Err(PyValueError::new_err(format!(
                "mode must be per-pair or race, got {mode}"
            )))
        }
    };
    CoincidenceParams::new(det.inner, window, mode).map_err(err)
}

/// Per-channel click probabilities of a signal with power matrix `power`,
/// measured in the columns of `basis` (identity by default).
#[pyfunction]
#[pyo3(signature = (power, detector, dt = 0.01, trials = 10_000, seed = 0, basis = None, mode = "race", workers = 0))]
#[allow(clippy::too_many_arguments)]
fn estimate_single_probabilities(
    py: Python<'_>,
    power: Vec<Vec<Complex64>>,
    detector: PyRef<'_, PyDetector>,
    dt: f64,
    trials: u64,
    seed: u64,
    basis: Option<Vec<Vec<Complex64>>>,
    mode: &str,
    workers: usize,
) -> PyResult<PyReport> {
    let det = detector.inner;
    let signal = model::SingleSignalSpec::new(to_matrix(&power)?, det.background).map_err(err)?;
    let basis = match basis {
        Some(b) => to_matrix(&b)?,
        None => CMatrix::identity(signal.dim(), signal.dim()),
    };
    let mode = counting_mode(mode)?;
    let r = py
        .detach(|| detector::estimate_single_probabilities(&signal, &basis, det, dt, &run(trials, seed, workers), mode))
        .map_err(err)?;
    Ok(r.into())
}

/// Joint click probabilities for every channel pair, flattened `i·m + j`.
#[pyfunction]
#[pyo3(signature = (model, detector, dt = 0.01, window = 0.0, trials = 10_000, seed = 0, mode = "per-pair", workers = 0))]
#[allow(clippy::too_many_arguments)]
fn estimate_joint_probabilities(
    py: Python<'_>,
    model: PyRef<'_, PyModel>,
    detector: PyRef<'_, PyDetector>,
    dt: f64,
    window: f64,
    trials: u64,
    seed: u64,
    mode: &str,
    workers: usize,
) -> PyResult<PyReport> {
    let params = coincidence_params(&detector, window, mode)?;
    let m = &model.inner;
    let r = py
        .detach(|| coincidence::estimate_joint_probabilities(m, &params, dt, &run(trials, seed, workers)))
        .map_err(err)?;
    Ok(r.into())
}

/// Single-side click probabilities for side 1 and side 2.
#[pyfunction]
#[pyo3(signature = (model, detector, dt = 0.01, trials = 10_000, seed = 0, mode = "per-pair", workers = 0))]
#[allow(clippy::too_many_arguments)]
fn estimate_marginal_probabilities(
    py: Python<'_>,
    model: PyRef<'_, PyModel>,
    detector: PyRef<'_, PyDetector>,
    dt: f64,
    trials: u64,
    seed: u64,
    mode: &str,
    workers: usize,
) -> PyResult<(PyReport, PyReport)> {
    let params = coincidence_params(&detector, 0.0, mode)?;
    let m = &model.inner;
    let (a, b) = py
        .detach(|| coincidence::estimate_marginal_probabilities(m, &params, dt, &run(trials, seed, workers)))
        .map_err(err)?;
    Ok((a.into(), b.into()))
}

/// Mean click time of one channel of power `power` without background.
#[pyfunction]
#[pyo3(signature = (power, detector, dt = 0.01, trials = 4000, seed = 0, workers = 0))]
fn mean_click_time<'py>(
    py: Python<'py>,
    power: f64,
    detector: PyRef<'_, PyDetector>,
    dt: f64,
    trials: u64,
    seed: u64,
    workers: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let det = detector.inner;
    let t = py
        .detach(|| detector::mean_click_time(power, det, dt, &run(trials, seed, workers)))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("tau_mean", t.tau_mean)?;
    d.set_item("tau_se", t.tau_se)?;
    d.set_item("ratio", t.ratio)?;
    d.set_item("kappa_over_tau", t.kappa_over_tau)?;
    d.set_item("clicks", t.clicks)?;
    d.set_item("censored", t.censored)?;
    d.set_item("regime_violation", t.regime_violation)?;
    Ok(d)
}

/// Mean joint click time of a scalar pair; the background is the detector's.
#[pyfunction]
#[pyo3(signature = (cross, detector, dt = 0.01, window = 0.0, trials = 4000, seed = 0, workers = 0))]
#[allow(clippy::too_many_arguments)]
fn mean_joint_time<'py>(
    py: Python<'py>,
    cross: Complex64,
    detector: PyRef<'_, PyDetector>,
    dt: f64,
    window: f64,
    trials: u64,
    seed: u64,
    workers: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let params = coincidence_params(&detector, window, "per-pair")?;
    let e0 = detector.inner.background;
    let t = py
        .detach(|| coincidence::mean_joint_time(cross, e0, &params, dt, &run(trials, seed, workers)))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("tau_mean", t.tau_mean)?;
    d.set_item("tau_se", t.tau_se)?;
    d.set_item("threshold_product", t.threshold_product)?;
    d.set_item("signal_over_background", t.signal_over_background)?;
    d.set_item("kappa_over_tau", t.kappa_over_tau)?;
    d.set_item("clicks", t.clicks)?;
    d.set_item("censored", t.censored)?;
    d.set_item("regime_violation", t.regime_violation)?;
    Ok(d)
}

/// Mean smoothed energy of pure background; returns `(mean, se)`.
#[pyfunction]
#[pyo3(signature = (background, detector, dt = 0.01, trials = 10_000, seed = 0, workers = 0))]
fn calibrate_background(
    py: Python<'_>,
    background: f64,
    detector: PyRef<'_, PyDetector>,
    dt: f64,
    trials: u64,
    seed: u64,
    workers: usize,
) -> PyResult<(f64, f64)> {
    let det = detector.inner;
    let e = py
        .detach(|| detector::calibrate_background(background, det, dt, &run(trials, seed, workers)))
        .map_err(err)?;
    Ok((e.mean, e.se))
}

fn state(sigma12: &[Vec<Complex64>]) -> PyResult<oracle::QuantumState> {
    oracle::state_from_correlations(&to_matrix(sigma12)?).map_err(err)
}

/// `(P++, P+-, P-+, P--)` for the state built from `sigma12`.
#[pyfunction]
fn joint_born(sigma12: Vec<Vec<Complex64>>, theta1: f64, theta2: f64) -> PyResult<[f64; 4]> {
    oracle::joint_born_table(&state(&sigma12)?, theta1, theta2).map_err(err)
}

#[pyfunction]
fn correlation(sigma12: Vec<Vec<Complex64>>, theta1: f64, theta2: f64) -> PyResult<f64> {
    oracle::correlation(&state(&sigma12)?, theta1, theta2).map_err(err)
}

/// CHSH value for angles `(a, a2, b, b2)`; the maximal-violation quadruple by default.
#[pyfunction]
#[pyo3(signature = (sigma12, angles = None))]
fn chsh_value(sigma12: Vec<Vec<Complex64>>, angles: Option<[f64; 4]>) -> PyResult<f64> {
    oracle::chsh_value(&state(&sigma12)?, angles.unwrap_or(oracle::CHSH_ANGLES)).map_err(err)
}

#[pyfunction]
fn partial_trace(sigma12: Vec<Vec<Complex64>>, side_index: u8) -> PyResult<Vec<Vec<Complex64>>> {
    Ok(to_rows(
        oracle::partial_trace(&state(&sigma12)?, side(side_index)?).matrix(),
    ))
}

#[pyfunction]
fn density_from_covariance(b: Vec<Vec<Complex64>>) -> PyResult<Vec<Vec<Complex64>>> {
    Ok(to_rows(
        oracle::density_from_covariance(&to_matrix(&b)?).map_err(err)?.matrix(),
    ))
}

fn law(cov: &[Vec<Complex64>]) -> PyResult<quadratic::GaussianLaw> {
    quadratic::GaussianLaw::new(to_matrix(cov)?).map_err(err)
}

fn form(a: &[Vec<Complex64>]) -> PyResult<quadratic::QuadraticForm> {
    quadratic::QuadraticForm::new(to_matrix(a)?).map_err(err)
}

/// `E⟨Aφ, φ⟩` for `φ` with covariance `cov`.
#[pyfunction]
fn quadratic_mean(cov: Vec<Vec<Complex64>>, a: Vec<Vec<Complex64>>) -> PyResult<f64> {
    quadratic::quadratic_mean(&law(&cov)?, &form(&a)?).map_err(err)
}

#[pyfunction]
fn quadratic_correlation(cov: Vec<Vec<Complex64>>, a1: Vec<Vec<Complex64>>, a2: Vec<Vec<Complex64>>) -> PyResult<f64> {
    quadratic::quadratic_correlation(&law(&cov)?, &form(&a1)?, &form(&a2)?).map_err(err)
}

/// Runs a named experiment preset and returns the report as TOML text.
#[pyfunction]
#[pyo3(signature = (experiment, config = None, seed = None, trials = None, workers = None))]
fn run_experiment(
    py: Python<'_>,
    experiment: &str,
    config: Option<&str>,
    seed: Option<u64>,
    trials: Option<u64>,
    workers: Option<usize>,
) -> PyResult<String> {
    let kind: Experiment = experiment.parse().map_err(err)?;
    let file = harness::parse_config_str(config.unwrap_or("")).map_err(err)?;
    let ov = Overrides {
        seed,
        trials,
        workers,
        ..Overrides::default()
    };
    let cfg = ExperimentConfig::resolve(kind, file, &ov).map_err(err)?;
    let report = py.detach(|| harness::run_experiment(&cfg)).map_err(err)?;
    Ok(report.to_toml())
}

#[pymodule]
fn tsd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyDetector>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(estimate_single_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_joint_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_marginal_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(mean_click_time, m)?)?;
    m.add_function(wrap_pyfunction!(mean_joint_time, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_background, m)?)?;
    m.add_function(wrap_pyfunction!(joint_born, m)?)?;
    m.add_function(wrap_pyfunction!(correlation, m)?)?;
    m.add_function(wrap_pyfunction!(chsh_value, m)?)?;
    m.add_function(wrap_pyfunction!(partial_trace, m)?)?;
    m.add_function(wrap_pyfunction!(density_from_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(quadratic_mean, m)?)?;
    m.add_function(wrap_pyfunction!(quadratic_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
