//! Python bindings.
//!
//! Matrices cross the boundary as lists of columns (`list[list[float]]`).
//! Structured results come back as plain dicts and lists.

use ebvarsel_core::diagnostics;
use ebvarsel_core::em::{EmConfig, Strategy};
use ebvarsel_core::error::Error;
use ebvarsel_core::lasso::{self, LassoConfig};
use ebvarsel_core::model::Dataset;
use ebvarsel_core::preprocess;
use ebvarsel_core::sim::{run_study, SimDesign};
use ebvarsel_core::{fit_with_restarts, InMemoryColumns, RestartFit};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_) | Error::Schema(_) | Error::RankDeficient { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Serialize through JSON into native Python objects.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Result of `fit`.
#[pyclass(module = "ebvarsel", frozen)]
struct FitResult {
    run: RestartFit,
    config: EmConfig,
}

#[pymethods]
impl FitResult {
    /// Selected columns as `(name, sign, p_null)` tuples, most certain first.
    #[getter]
    fn selected(&self) -> Vec<(String, i8, f64)> {
        self.run.fit.selected.iter().map(|s| (s.name.clone(), s.sign, s.p_null)).collect()
    }

    #[getter]
    fn params<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.run.fit.params)
    }

    /// Per-column `(P(-1), P(0), P(+1))`.
    #[getter]
    fn posteriors(&self) -> Vec<(f64, f64, f64)> {
        self.run.fit.posteriors.iter().map(|p| (p[0], p[1], p[2])).collect()
    }

    #[getter]
    fn gamma(&self) -> Vec<f64> {
        self.run.fit.gamma.clone()
    }

    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.run.fit.log_likelihood
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.run.fit.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.run.fit.converged
    }

    /// OLS refit of the selection, or `None` if it could not be fitted.
    #[getter]
    fn refit<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.run.refit)
    }

    #[getter]
    fn restarts<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.run.restarts)
    }

    /// The full result document, as written by the command-line `fit`.
    fn to_json(&self) -> PyResult<String> {
        let report = ebvarsel_core::io::FitReport::new(&self.config, &self.run);
        serde_json::to_string_pretty(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        let names: Vec<&str> = self.run.fit.selected.iter().map(|s| s.name.as_str()).collect();
        format!("FitResult(selected={names:?}, log_likelihood={:.4})", self.run.fit.log_likelihood)
    }
}

/// Fit the selection model. `z` holds the putative columns; an intercept
/// plus the optional `x` columns are always in the model.
#[pyfunction]
#[pyo3(signature = (y, z, x=None, names=None, strategy="greedy", seed=0, null_threshold=0.8, max_iter=500, restarts=1, config=None))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    y: Vec<f64>,
    z: Vec<Vec<f64>>,
    x: Option<Vec<Vec<f64>>>,
    names: Option<Vec<String>>,
    strategy: &str,
    seed: u64,
    null_threshold: f64,
    max_iter: usize,
    restarts: usize,
    config: Option<&str>,
) -> PyResult<FitResult> {
    let mut cfg: EmConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("config: {e}")))?,
        None => EmConfig::default(),
    };
    cfg.strategy = strategy.parse::<Strategy>().map_err(to_py_err)?;
    cfg.seed = seed;
    cfg.null_threshold = null_threshold;
    cfg.max_iter = max_iter;

    let n = y.len();
    let x = x.unwrap_or_default();
    let j = 1 + x.len();
    if x.iter().any(|c| c.len() != n) {
        return Err(PyValueError::new_err("every x column must have len(y) rows"));
    }
    let design = intercept_design(n, &x);
    let mut x_names = vec!["(Intercept)".to_string()];
    x_names.extend((1..j).map(|i| format!("x{i}")));
    let z_names = names.unwrap_or_else(|| (1..=z.len()).map(|k| format!("z{k}")).collect());
    let source = Arc::new(InMemoryColumns::from_columns(z).map_err(to_py_err)?);
    let data = Dataset::new(y, design, source, x_names, z_names).map_err(to_py_err)?;

    let run = py.detach(|| fit_with_restarts(&data, &cfg, restarts)).map_err(to_py_err)?;
    Ok(FitResult { run, config: cfg })
}

fn intercept_design(n: usize, x: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(n, 1 + x.len(), |i, c| if c == 0 { 1.0 } else { x[c - 1][i] })
}

/// Run the correlated-groups simulation study; returns the summary and the
/// per-replicate rows.
#[pyfunction]
#[pyo3(signature = (n=40, replicates=30, seed=0, cv_repeats=30, parallel=true))]
fn simulate<'py>(
    py: Python<'py>,
    n: usize,
    replicates: usize,
    seed: u64,
    cv_repeats: usize,
    parallel: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let design = SimDesign { n, replicates, seed, parallel, ..SimDesign::default() };
    let em = EmConfig { parallel, ..EmConfig::default() };
    let lasso = LassoConfig { repeats: cv_repeats, parallel, ..LassoConfig::default() };
    let report = py.detach(|| run_study(&design, &em, &lasso)).map_err(to_py_err)?;
    to_py(py, &report)
}

/// Repeated K-fold cross-validated LASSO on the columns `z`.
#[pyfunction]
#[pyo3(signature = (y, z, folds=10, repeats=30, seed=0))]
fn lasso_cv<'py>(
    py: Python<'py>,
    y: Vec<f64>,
    z: Vec<Vec<f64>>,
    folds: usize,
    repeats: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = LassoConfig { folds, repeats, seed, ..LassoConfig::default() };
    let cv = py.detach(|| lasso::lasso_cv_select(&y, &z, &cfg)).map_err(to_py_err)?;
    to_py(py, &cv)
}

/// Additive log-ratio of a counts table; the reference column is dropped.
#[pyfunction]
#[pyo3(signature = (counts, reference=None, zero_replacement=0.5))]
fn logratio_transform(counts: Vec<Vec<f64>>, reference: Option<usize>, zero_replacement: f64) -> PyResult<Vec<Vec<f64>>> {
    let r = reference.unwrap_or(counts.len().saturating_sub(1));
    preprocess::logratio_transform(&counts, r, zero_replacement).map_err(to_py_err)
}

/// Map each column affinely onto [-1, 1]; constant columns are unchanged.
#[pyfunction]
fn rescale_minmax(columns: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    preprocess::rescale_minmax(&columns).0
}

/// Least-squares fit of `y` on the given design columns.
#[pyfunction]
#[pyo3(signature = (y, design, names=None))]
fn ols_refit<'py>(
    py: Python<'py>,
    y: Vec<f64>,
    design: Vec<Vec<f64>>,
    names: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyAny>> {
    let n = y.len();
    if design.iter().any(|c| c.len() != n) {
        return Err(PyValueError::new_err("every design column must have len(y) rows"));
    }
    let m = DMatrix::from_fn(n, design.len(), |i, c| design[c][i]);
    let names = names.unwrap_or_else(|| (0..design.len()).map(|c| format!("c{c}")).collect());
    let report = diagnostics::ols_refit(&y, &m, &names).map_err(to_py_err)?;
    to_py(py, &report)
}

/// Upper tail probability of Student's t distribution.
#[pyfunction]
fn student_t_sf(t: f64, df: f64) -> PyResult<f64> {
    if !(df > 0.0) {
        return Err(PyValueError::new_err("df must be positive"));
    }
    Ok(diagnostics::student_t_sf(t, df))
}

#[pymodule]
#[pyo3(name = "ebvarsel")]
fn ebvarsel_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<FitResult>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(lasso_cv, m)?)?;
    m.add_function(wrap_pyfunction!(logratio_transform, m)?)?;
    m.add_function(wrap_pyfunction!(rescale_minmax, m)?)?;
    m.add_function(wrap_pyfunction!(ols_refit, m)?)?;
    m.add_function(wrap_pyfunction!(student_t_sf, m)?)?;
    Ok(())
}
