use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use subdiff::algorithms::Variant;
use subdiff::datamodel::InputKind;
use subdiff::error::{Error, Result as CoreResult};
use subdiff::experiments::{self, montecarlo, report, SChoice, SubspaceChoice};
use subdiff::linalg::CMat;
use subdiff::subspace::{self, SubspacePair, UniquenessCertificate};

create_exception!(subdiff, SubdiffError, PyException);

/// Raises `SubdiffError(message, kind)`.
fn to_py(e: Error) -> PyErr {
    SubdiffError::new_err((e.to_string(), e.kind()))
}

type Matrix = Vec<Vec<Complex64>>;

fn to_rows(m: &CMat) -> Matrix {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn from_rows(rows: &Matrix) -> PyResult<CMat> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(to_py(Error::DimensionMismatch("ragged matrix rows".into())));
    }
    Ok(CMat::from_fn(n, m, |i, j| rows[i][j]))
}

fn parse<T>(r: CoreResult<T>) -> PyResult<T> {
    r.map_err(to_py)
}

/// A validated experiment description.
#[pyclass(name = "ExperimentConfig", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: experiments::ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { inner: parse(experiments::ExperimentConfig::from_toml_str(text))? })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Ok(Self { inner: parse(experiments::ExperimentConfig::from_file(path.as_ref()))? })
    }

    /// `input`: "white" | "correlated"; `subspace`: "theta1" | "theta2";
    /// `s_choice`: "subspace" | "identity".
    #[staticmethod]
    #[pyo3(signature = (setting, input, subspace, mu, eta2 = 0.0, s_choice = "subspace"))]
    fn validation_setting(setting: u8, input: &str, subspace: &str, mu: f64, eta2: f64, s_choice: &str) -> PyResult<Self> {
        let input = match input {
            "white" => InputKind::White,
            "correlated" => InputKind::Correlated,
            other => return Err(to_py(Error::InvalidInput(format!("unknown input kind {other:?}")))),
        };
        let subspace = match subspace {
            "theta1" => SubspaceChoice::Theta1,
            "theta2" => SubspaceChoice::Theta2,
            other => return Err(to_py(Error::InvalidInput(format!("unknown subspace {other:?}")))),
        };
        let s_choice = match s_choice {
            "subspace" => SChoice::Subspace,
            "identity" => SChoice::Identity,
            other => return Err(to_py(Error::InvalidInput(format!("unknown s_choice {other:?}")))),
        };
        Ok(Self { inner: parse(experiments::validation_setting(setting, input, subspace, mu, eta2, s_choice))? })
    }

    fn to_toml(&self) -> PyResult<String> {
        parse(self.inner.to_toml_string())
    }

    /// Copy with seed, run count or iteration count replaced.
    #[pyo3(signature = (seed = None, runs = None, iters = None))]
    fn with_overrides(&self, seed: Option<u64>, runs: Option<usize>, iters: Option<usize>) -> PyResult<Self> {
        Ok(Self { inner: parse(self.inner.clone().with_overrides(seed, runs, iters))? })
    }

    #[getter]
    fn n_runs(&self) -> usize {
        self.inner.n_runs
    }

    #[getter]
    fn n_iterations(&self) -> usize {
        self.inner.n_iterations
    }

    #[getter]
    fn master_seed(&self) -> u64 {
        self.inner.master_seed
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.algorithm.variant.name()
    }

    fn build(&self) -> PyResult<PyExperiment> {
        Ok(PyExperiment { inner: parse(self.inner.build())? })
    }
}

/// A fully sampled experiment: network, tasks, environments and algorithm.
#[pyclass(name = "Experiment")]
struct PyExperiment {
    inner: experiments::Experiment,
}

#[pymethods]
impl PyExperiment {
    #[getter]
    fn n_agents(&self) -> usize {
        self.inner.n_agents()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.algorithm.dim()
    }

    /// Per-agent optima as lists of complex numbers.
    fn optima(&self) -> Vec<Vec<Complex64>> {
        self.inner.optima().iter().map(|w| w.iter().copied().collect()).collect()
    }

    /// Simulated network MSD in dB, `n_iterations + 1` points.
    #[pyo3(signature = (runs = None, iters = None))]
    fn monte_carlo_msd<'py>(&self, py: Python<'py>, runs: Option<usize>, iters: Option<usize>) -> PyResult<Bound<'py, PyDict>> {
        let cfg = &self.inner.config;
        let (runs, iters) = (runs.unwrap_or(cfg.n_runs), iters.unwrap_or(cfg.n_iterations));
        let mc = py.detach(|| montecarlo::monte_carlo_msd_with(&self.inner, runs, iters)).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("msd_db", mc.curve.values_db.clone())?;
        d.set_item("tail_msd_db", mc.curve.tail_average_db(report::TAIL_FRACTION))?;
        d.set_item("n_runs", mc.n_runs)?;
        d.set_item("diverged_runs", mc.diverged_runs)?;
        Ok(d)
    }

    /// Predicted transient MSD in dB plus the steady state.
    fn predict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let p = py.detach(|| experiments::predict(&self.inner)).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("msd_db", p.curve.values_db)?;
        d.set_item("steady_state_db", p.steady_state.db)?;
        d.set_item("spectral_radius", p.spectral_radius)?;
        Ok(d)
    }

    fn certify<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = experiments::certify(&self.inner).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("variant", r.variant.name())?;
        d.set_item("subspace_orthonormal", r.subspace_orthonormal)?;
        d.set_item("lemma1_min_eigenvalue", r.lemma1.min_eigenvalue)?;
        d.set_item("lemma1_positive_definite", r.lemma1.positive_definite)?;
        d.set_item("lemma2_min_eigenvalue", r.lemma2.as_ref().map(|l| l.min_eigenvalue))?;
        d.set_item("lemma2_positive_definite", r.lemma2.as_ref().map(|l| l.positive_definite))?;
        d.set_item("step_size_bound", r.step_size_bound)?;
        d.set_item("bound_guaranteed", r.bound_guaranteed)?;
        d.set_item("spectral_radius", r.spectral_radius)?;
        d.set_item("mean_stable", r.mean_stable)?;
        Ok(d)
    }
}

fn certificate_dict<'py>(py: Python<'py>, c: &UniquenessCertificate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("min_eigenvalue", c.min_eigenvalue)?;
    d.set_item("positive_definite", c.positive_definite)?;
    d.set_item("schur_complement", to_rows(&c.schur_complement))?;
    Ok(d)
}

/// Vandermonde subspace basis `Θ` (rows of complex numbers).
#[pyfunction]
fn ula_subspace(dim: usize, angles: Vec<f64>, spacing_ratio: f64) -> PyResult<Matrix> {
    Ok(to_rows(parse(subspace::ula_vandermonde_subspace(dim, &angles, spacing_ratio))?.theta()))
}

/// First `rank` standard basis vectors of `C^dim` as `Θ`.
#[pyfunction]
fn standard_basis(dim: usize, rank: usize) -> PyResult<Matrix> {
    Ok(to_rows(parse(subspace::standard_basis_subspace(dim, rank))?.theta()))
}

#[pyfunction]
fn lemma1_certificate<'py>(py: Python<'py>, theta: Matrix, covariances: Vec<Matrix>) -> PyResult<Bound<'py, PyDict>> {
    let pair = parse(SubspacePair::from_theta(from_rows(&theta)?))?;
    let covs = covariances.iter().map(from_rows).collect::<PyResult<Vec<_>>>()?;
    certificate_dict(py, &parse(subspace::lemma1_certificate(&pair, &covs))?)
}

#[pyfunction]
fn lemma2_certificate<'py>(py: Python<'py>, theta: Matrix, covariances: Vec<Matrix>, eta2: f64) -> PyResult<Bound<'py, PyDict>> {
    let covs = covariances.iter().map(from_rows).collect::<PyResult<Vec<_>>>()?;
    certificate_dict(py, &parse(subspace::lemma2_certificate(&from_rows(&theta)?, &covs, eta2))?)
}

/// Collinear-target localization with the default scenario parameters.
#[pyfunction]
#[pyo3(signature = (variant = "alg1", mu = 0.1, n_iterations = 2000, n_runs = 20, seed = 1))]
fn run_localization<'py>(
    py: Python<'py>,
    variant: &str,
    mu: f64,
    n_iterations: usize,
    n_runs: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let variant = parse(Variant::from_name(variant))?;
    let scenario = parse(experiments::build_localization(&Default::default(), seed))?;
    let r = py
        .detach(|| montecarlo::run_localization(variant, &scenario, mu, n_iterations, n_runs, seed))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("msd_db", r.monte_carlo.curve.values_db.clone())?;
    d.set_item("tail_msd_db", r.monte_carlo.curve.tail_average_db(report::TAIL_FRACTION))?;
    d.set_item("mean_line_distance", r.mean_line_distance)?;
    let estimates: Vec<[f64; 3]> = r.estimates.iter().map(|e| [e[0], e[1], e[2]]).collect();
    d.set_item("estimates", estimates)?;
    d.set_item("assignment", scenario.assignment.clone())?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "subdiff")]
fn subdiff_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SubdiffError", m.py().get_type::<SubdiffError>())?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyExperiment>()?;
    m.add_function(wrap_pyfunction!(ula_subspace, m)?)?;
    m.add_function(wrap_pyfunction!(standard_basis, m)?)?;
    m.add_function(wrap_pyfunction!(lemma1_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(lemma2_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(run_localization, m)?)?;
    Ok(())
}
