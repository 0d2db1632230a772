//! Python bindings. Matrices cross the boundary as lists of rows, with NaN
//! marking unobserved entries; held-out sets are lists of `(row, col)` pairs.

use lstc_core::evaluation::MissingPattern;
use lstc_core::io::{read_matrix, write_matrix, MatrixFormat};
use lstc_core::transform::{build_transform, TransformKind};
use lstc_core::{ObservationMask, SpatioTemporalMatrix, TensorDims};
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: lstc_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_dmatrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Splits a NaN-coded matrix into zero-filled values and the observed mask.
fn split_missing(rows: &[Vec<f64>]) -> PyResult<(SpatioTemporalMatrix, ObservationMask)> {
    let raw = to_dmatrix(rows)?;
    let mask = ObservationMask::from_fn(raw.nrows(), raw.ncols(), |r, c| !raw[(r, c)].is_nan());
    Ok((SpatioTemporalMatrix::new(raw.map(|v| if v.is_nan() { 0.0 } else { v })), mask))
}

fn with_missing(y: &SpatioTemporalMatrix, mask: &ObservationMask) -> Vec<Vec<f64>> {
    let mut m = y.values().clone();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if !mask.contains(r, c) {
                m[(r, c)] = f64::NAN;
            }
        }
    }
    to_rows(&m)
}

fn dims_for(y: &SpatioTemporalMatrix, intervals: usize) -> PyResult<TensorDims> {
    TensorDims::from_matrix_shape(y.rows(), y.cols(), intervals).map_err(err)
}

fn parse_transform(name: &str) -> PyResult<TransformKind> {
    match name {
        "unitary" | "data-driven" => Ok(TransformKind::DataDriven),
        "dct" => Ok(TransformKind::Dct),
        "identity" => Ok(TransformKind::Identity),
        other => Err(PyValueError::new_err(format!("unknown transform {other:?}"))),
    }
}

#[pyclass(name = "SolverConfig", from_py_object)]
#[derive(Clone)]
pub struct PySolverConfig {
    #[pyo3(get, set)]
    pub rho0: f64,
    /// `None` means `1e5 · rho0`.
    #[pyo3(get, set)]
    pub rho_max: Option<f64>,
    #[pyo3(get, set)]
    pub lambda_coef: f64,
    #[pyo3(get, set)]
    pub epsilon: f64,
    #[pyo3(get, set)]
    pub max_iters: usize,
    #[pyo3(get, set)]
    pub refresh: usize,
    #[pyo3(get, set)]
    pub transform: String,
}

#[pymethods]
impl PySolverConfig {
    #[new]
    #[pyo3(signature = (rho0=1e-3, rho_max=None, lambda_coef=1e-3, epsilon=1e-3, max_iters=200, refresh=10, transform="unitary".to_string()))]
    fn new(
        rho0: f64,
        rho_max: Option<f64>,
        lambda_coef: f64,
        epsilon: f64,
        max_iters: usize,
        refresh: usize,
        transform: String,
    ) -> PyResult<Self> {
        let config = Self { rho0, rho_max, lambda_coef, epsilon, max_iters, refresh, transform };
        config.to_core()?.validate().map_err(err)?;
        Ok(config)
    }

    fn __repr__(&self) -> String {
        format!(
            "SolverConfig(rho0={}, rho_max={:?}, lambda_coef={}, epsilon={}, max_iters={}, refresh={}, transform={:?})",
            self.rho0, self.rho_max, self.lambda_coef, self.epsilon, self.max_iters, self.refresh, self.transform
        )
    }
}

impl PySolverConfig {
    fn to_core(&self) -> PyResult<lstc_core::SolverConfig> {
        Ok(lstc_core::SolverConfig {
            rho0: self.rho0,
            rho_max: self.rho_max.unwrap_or(1e5 * self.rho0),
            lambda_coef: self.lambda_coef,
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            phi_refresh_period: self.refresh,
            transform: parse_transform(&self.transform)?,
            ..lstc_core::SolverConfig::default()
        })
    }
}

/// Per-iteration diagnostics of an `impute` call.
#[pyclass(name = "Trace", get_all)]
pub struct PyTrace {
    pub converged: bool,
    pub iterations: usize,
    pub rho: Vec<f64>,
    pub metric: Vec<f64>,
    pub ranks: Vec<Vec<usize>>,
}

#[pyclass(name = "EvalReport", get_all)]
pub struct PyEvalReport {
    pub mape: f64,
    pub rmse: f64,
    pub n_eval: usize,
    pub n_skipped_zero: usize,
}

#[pymethods]
impl PyEvalReport {
    fn __repr__(&self) -> String {
        format!(
            "EvalReport(mape={:.4}, rmse={:.4}, n_eval={}, n_skipped_zero={})",
            self.mape, self.rmse, self.n_eval, self.n_skipped_zero
        )
    }
}

/// Completes a sensor × time matrix whose missing entries are NaN.
#[pyfunction]
#[pyo3(signature = (matrix, intervals, config=None))]
fn impute(
    py: Python<'_>,
    matrix: Vec<Vec<f64>>,
    intervals: usize,
    config: Option<PySolverConfig>,
) -> PyResult<(Vec<Vec<f64>>, PyTrace)> {
    let (y, mask) = split_missing(&matrix)?;
    let dims = dims_for(&y, intervals)?;
    let config = match config {
        Some(c) => c.to_core()?,
        None => lstc_core::SolverConfig::default(),
    };
    let (x, trace) = py.detach(|| lstc_core::run(&y, &mask, dims, &config)).map_err(err)?;
    let out = PyTrace {
        converged: trace.converged,
        iterations: trace.iterations(),
        rho: trace.records.iter().map(|r| r.rho).collect(),
        metric: trace.records.iter().map(|r| r.metric).collect(),
        ranks: trace.records.iter().map(|r| r.ranks.clone()).collect(),
    };
    Ok((to_rows(x.values()), out))
}

/// Synthetic sensors × (intervals·days) matrix of tubal rank `rank`.
#[pyfunction]
#[pyo3(signature = (sensors, intervals, days, rank=3, sigma=0.0, seed=0))]
fn synth(sensors: usize, intervals: usize, days: usize, rank: usize, sigma: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let dims = TensorDims::new(sensors, intervals, days).map_err(err)?;
    Ok(to_rows(lstc_core::synth(dims, rank, sigma, seed).map_err(err)?.values()))
}

/// Holds out observed entries. Returns the training matrix (held-out
/// entries set to NaN) and the held-out `(row, col)` pairs.
#[pyfunction]
#[pyo3(signature = (matrix, intervals, pattern, rate, seed=0, exact_quota=false))]
fn generate_mask(
    matrix: Vec<Vec<f64>>,
    intervals: usize,
    pattern: &str,
    rate: f64,
    seed: u64,
    exact_quota: bool,
) -> PyResult<(Vec<Vec<f64>>, Vec<(usize, usize)>)> {
    let (y, base) = split_missing(&matrix)?;
    let dims = dims_for(&y, intervals)?;
    let pattern = match pattern {
        "rm" => MissingPattern::Rm,
        "nm" => MissingPattern::Nm,
        other => return Err(PyValueError::new_err(format!("unknown pattern {other:?}"))),
    };
    let spec = lstc_core::MaskSpec { pattern, rate, seed, exact_quota };
    let (train, test) = lstc_core::generate_mask(&base, dims, &spec).map_err(err)?;
    Ok((with_missing(&y, &train), test.iter().collect()))
}

/// MAPE (percent) and RMSE over the held-out pairs.
#[pyfunction]
fn evaluate(truth: Vec<Vec<f64>>, recovered: Vec<Vec<f64>>, test: Vec<(usize, usize)>) -> PyResult<PyEvalReport> {
    let truth = SpatioTemporalMatrix::new(to_dmatrix(&truth)?);
    let recovered = SpatioTemporalMatrix::new(to_dmatrix(&recovered)?);
    let mask = ObservationMask::from_pairs(truth.rows(), truth.cols(), test).map_err(err)?;
    let r = lstc_core::evaluate(&truth, &recovered, &mask).map_err(err)?;
    Ok(PyEvalReport {
        mape: r.mape,
        rmse: r.rmse,
        n_eval: r.n_eval,
        n_skipped_zero: r.n_skipped_zero,
    })
}

/// `U max(Σ − tau, 0) Vᵀ`.
#[pyfunction]
fn matrix_svt(a: Vec<Vec<f64>>, tau: f64) -> PyResult<Vec<Vec<f64>>> {
    let (x, _) = lstc_core::matrix_svt(&to_dmatrix(&a)?, tau).map_err(err)?;
    Ok(to_rows(&x))
}

/// Orthonormal DCT basis; column `k` is the `k`-th cosine vector.
#[pyfunction]
fn dct_matrix(order: usize) -> PyResult<Vec<Vec<f64>>> {
    Ok(to_rows(lstc_core::dct_matrix(order).map_err(err)?.matrix()))
}

/// Per-day singular values of a complete matrix in the transformed domain.
#[pyfunction]
#[pyo3(signature = (matrix, intervals, transform="unitary"))]
fn spectrum(matrix: Vec<Vec<f64>>, intervals: usize, transform: &str) -> PyResult<Vec<Vec<f64>>> {
    let y = SpatioTemporalMatrix::new(to_dmatrix(&matrix)?);
    let x = lstc_core::tensorize(&y, dims_for(&y, intervals)?).map_err(err)?;
    let phi = build_transform(parse_transform(transform)?, &x).map_err(err)?;
    lstc_core::spectrum(&x, &phi).map_err(err)
}

/// Reads a dataset file; missing entries come back as NaN.
#[pyfunction]
#[pyo3(signature = (path, intervals=None))]
fn read_dataset(path: std::path::PathBuf, intervals: Option<usize>) -> PyResult<(Vec<Vec<f64>>, usize)> {
    let (y, mask, dims) = read_matrix(&path, MatrixFormat::from_path(&path), intervals).map_err(err)?;
    Ok((with_missing(&y, &mask), dims.intervals()))
}

/// Writes a NaN-coded matrix; `.csv`/`.txt`/`.tsv` are delimited, anything else binary.
#[pyfunction]
fn write_dataset(path: std::path::PathBuf, matrix: Vec<Vec<f64>>, intervals: usize) -> PyResult<()> {
    let (y, mask) = split_missing(&matrix)?;
    let dims = dims_for(&y, intervals)?;
    write_matrix(&path, &y, &mask, dims, MatrixFormat::from_path(&path)).map_err(err)
}

#[pymodule]
fn lstc_tubal(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySolverConfig>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyEvalReport>()?;
    m.add_function(wrap_pyfunction!(impute, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(generate_mask, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_svt, m)?)?;
    m.add_function(wrap_pyfunction!(dct_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(read_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(write_dataset, m)?)?;
    Ok(())
}
