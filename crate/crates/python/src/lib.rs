//! Python bindings for the `legendre_bvp` solvers.
//!
//! Nonlinearities are passed either as expression strings in `s` or as
//! `Function` objects carrying declared limits. Errors from parsing and
//! option validation raise `ValueError`; a refused resonant solve raises
//! `RefusedError`; numerical failures raise `RuntimeError`.

use legendre_bvp::basis::{self, QuadratureRule};
use legendre_bvp::bifurcation as bif;
use legendre_bvp::lyapunov_schmidt::{solvability_check, ResonantContext};
use legendre_bvp::resolvent;
use legendre_bvp::solver::SolverError;
use legendre_bvp::verify::{self, OracleConfig};
use legendre_bvp::{
    LegendreSeries, Limits, Mode, Problem, ScalarFunction, SolverOptions,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

create_exception!(legendre_bvp, RefusedError, pyo3::exceptions::PyException);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn solver_err(e: SolverError) -> PyErr {
    match e {
        SolverError::InvalidOptions(_) => value_err(e),
        SolverError::Refused { .. } => RefusedError::new_err(e.to_string()),
        other => runtime_err(other),
    }
}

fn bif_err(e: bif::BifurcationError) -> PyErr {
    match e {
        bif::BifurcationError::Solver(s) => solver_err(s),
        bif::BifurcationError::InvalidGrid(_) | bif::BifurcationError::NotSimple { .. } => {
            value_err(e)
        }
        other => runtime_err(other),
    }
}

fn to_json(value: &impl serde::Serialize) -> PyResult<String> {
    serde_json::to_string(value).map_err(runtime_err)
}

/// A nonlinearity `f(s)` parsed from an expression.
#[pyclass(name = "Function", module = "legendre_bvp", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFunction {
    inner: ScalarFunction,
}

#[pymethods]
impl PyFunction {
    #[new]
    #[pyo3(signature = (source, limit_neg = None, limit_pos = None))]
    fn new(source: &str, limit_neg: Option<f64>, limit_pos: Option<f64>) -> PyResult<Self> {
        let mut inner = ScalarFunction::parse(source).map_err(value_err)?;
        match (limit_neg, limit_pos) {
            (Some(neg), Some(pos)) => inner = inner.with_limits(Limits::new(neg, pos)),
            (None, None) => {}
            _ => return Err(value_err("declare both limits or neither")),
        }
        Ok(Self { inner })
    }

    #[getter]
    fn source(&self) -> String {
        self.inner.source().to_string()
    }

    fn eval(&self, s: f64) -> PyResult<f64> {
        self.inner.eval(s).map_err(value_err)
    }

    fn eval_with_deriv(&self, s: f64) -> PyResult<(f64, f64)> {
        self.inner.eval_with_deriv(s).map_err(value_err)
    }

    /// `(f(-∞), f(+∞))`, declared or estimated.
    fn limits(&self) -> PyResult<(f64, f64)> {
        let l = self.inner.limits_at_infinity().map_err(value_err)?;
        Ok((l.neg, l.pos))
    }

    fn __repr__(&self) -> String {
        format!("Function({:?})", self.inner.source())
    }
}

#[derive(FromPyObject)]
enum FunctionArg {
    Object(Py<PyFunction>),
    Text(String),
}

impl FunctionArg {
    fn resolve(&self) -> PyResult<ScalarFunction> {
        match self {
            FunctionArg::Object(f) => Ok(f.get().inner.clone()),
            FunctionArg::Text(t) => ScalarFunction::parse(t).map_err(value_err),
        }
    }
}

/// A truncated Legendre series `Σ c_k P_k`.
#[pyclass(name = "Series", module = "legendre_bvp", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySeries {
    inner: LegendreSeries,
}

#[pymethods]
impl PySeries {
    #[new]
    fn new(coeffs: Vec<f64>) -> Self {
        Self { inner: LegendreSeries::new(coeffs) }
    }

    #[getter]
    fn coeffs(&self) -> Vec<f64> {
        self.inner.coeffs().to_vec()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree()
    }

    fn eval(&self, t: f64) -> f64 {
        self.inner.eval(t)
    }

    fn __len__(&self) -> usize {
        self.inner.coeffs().len()
    }

    fn __repr__(&self) -> String {
        format!("Series(degree={})", self.inner.degree())
    }
}

/// Result of a solve.
#[pyclass(name = "SolutionReport", module = "legendre_bvp", frozen, skip_from_py_object)]
struct PySolutionReport {
    inner: legendre_bvp::SolutionReport,
}

#[pymethods]
impl PySolutionReport {
    #[getter]
    fn coeffs(&self) -> Vec<f64> {
        self.inner.x.coeffs().to_vec()
    }

    #[getter]
    fn series(&self) -> PySeries {
        PySeries { inner: self.inner.x.clone() }
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn residual_coeff(&self) -> f64 {
        self.inner.residual_coeff
    }

    #[getter]
    fn residual_grid(&self) -> f64 {
        self.inner.residual_grid
    }

    #[getter]
    fn alpha(&self) -> Option<f64> {
        self.inner.alpha
    }

    #[getter]
    fn kernel_integral(&self) -> Option<f64> {
        self.inner.kernel_integral
    }

    fn eval(&self, t: f64) -> f64 {
        self.inner.x.eval(t)
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "SolutionReport(converged={}, iterations={}, residual_coeff={:e})",
            self.inner.converged, self.inner.iterations, self.inner.residual_coeff
        )
    }
}

/// A continued branch of solutions through `α₀ P_k`.
#[pyclass(name = "BranchReport", module = "legendre_bvp", frozen, skip_from_py_object)]
struct PyBranchReport {
    inner: bif::BranchReport,
}

#[pymethods]
impl PyBranchReport {
    #[getter]
    fn alpha0(&self) -> f64 {
        self.inner.alpha0
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn epsilons(&self) -> Vec<f64> {
        self.inner.points.iter().map(|p| p.epsilon).collect()
    }

    #[getter]
    fn distances(&self) -> Vec<f64> {
        self.inner.points.iter().map(|p| p.sup_distance_to_xbar).collect()
    }

    #[getter]
    fn alphas(&self) -> Vec<f64> {
        self.inner.points.iter().map(|p| p.alpha).collect()
    }

    /// Coefficients of the solution at each accepted `ε`.
    #[getter]
    fn solutions(&self) -> Vec<Vec<f64>> {
        self.inner.points.iter().map(|p| p.x.coeffs().to_vec()).collect()
    }

    #[getter]
    fn convergence_rate_estimate(&self) -> Option<f64> {
        self.inner.convergence_rate_estimate
    }

    #[getter]
    fn monotone(&self) -> bool {
        self.inner.monotone
    }

    #[getter]
    fn truncated_at(&self) -> Option<f64> {
        self.inner.truncated_at
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.points.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "BranchReport(alpha0={}, k={}, points={})",
            self.inner.alpha0,
            self.inner.k,
            self.inner.points.len()
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn options(
    degree: usize,
    mode: &str,
    tol: f64,
    damping: f64,
    max_iters: usize,
    x0: Option<Vec<f64>>,
    override_solvability: bool,
    quad_order: Option<usize>,
) -> PyResult<SolverOptions> {
    let opts = SolverOptions {
        degree,
        quad_order,
        damping,
        tol,
        max_iters,
        mode: mode.parse::<Mode>().map_err(value_err)?,
        x0,
        override_solvability,
    };
    opts.validate().map_err(solver_err)?;
    Ok(opts)
}

/// `P_k(t)`.
#[pyfunction]
fn eval_legendre(k: usize, t: f64) -> f64 {
    basis::eval_legendre(k, t)
}

/// Gauss–Legendre nodes and weights of order `n`.
#[pyfunction]
fn gauss_rule(n: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let rule = QuadratureRule::gauss(n).map_err(value_err)?;
    Ok((rule.nodes().to_vec(), rule.weights().to_vec()))
}

/// The index `k` with `μ = k(k+1)`, or `None`.
#[pyfunction]
fn is_resonant(mu: f64) -> Option<usize> {
    resolvent::is_resonant(mu)
}

/// Upper bound for the `L²` norm of the inverse linear operator.
#[pyfunction]
#[pyo3(signature = (mu, terms = 100_000))]
fn norm_bound(mu: f64, terms: usize) -> PyResult<f64> {
    resolvent::resolvent_norm_bound(mu, terms).map_err(value_err)
}

/// Solves `[(1-t²)x']' + μx = f(x)`; give exactly one of `mu` or `k`.
#[pyfunction]
#[pyo3(signature = (
    f, *, mu = None, k = None, N = 64, mode = "auto", tol = 1e-10, damping = 0.5,
    max_iters = 500, x0 = None, override_solvability = false, quad_order = None,
))]
#[allow(non_snake_case, clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    f: FunctionArg,
    mu: Option<f64>,
    k: Option<usize>,
    N: usize,
    mode: &str,
    tol: f64,
    damping: f64,
    max_iters: usize,
    x0: Option<Vec<f64>>,
    override_solvability: bool,
    quad_order: Option<usize>,
) -> PyResult<PySolutionReport> {
    let f = f.resolve()?;
    let problem = match (mu, k) {
        (Some(mu), None) => Problem::with_mu(mu, f),
        (None, Some(k)) => Problem::resonant(k, f),
        _ => return Err(value_err("give exactly one of mu or k")),
    };
    let opts = options(N, mode, tol, damping, max_iters, x0, override_solvability, quad_order)?;
    let inner = py.detach(|| problem.solve(&opts)).map_err(solver_err)?;
    Ok(PySolutionReport { inner })
}

/// Solvability verdict at resonance `k`: `(case, J1, J2)`.
#[pyfunction]
fn solvability(k: usize, f: FunctionArg) -> PyResult<(String, f64, f64)> {
    let f = f.resolve()?;
    let ctx = ResonantContext::build(k, k.max(1)).map_err(value_err)?;
    let v = solvability_check(&ctx, &f).map_err(value_err)?;
    let case = serde_json::to_value(v.case).map_err(runtime_err)?;
    Ok((case.as_str().unwrap_or_default().to_string(), v.j1, v.j2))
}

/// `H(α) = ∫ P_k f(α P_k) dt`.
#[pyfunction]
fn bifurcation_h(f: FunctionArg, k: usize, alpha: f64) -> PyResult<f64> {
    bif::bifurcation_h(&f.resolve()?, k, alpha).map_err(bif_err)
}

/// `H'(α) = ∫ P_k² f'(α P_k) dt`.
#[pyfunction]
fn bifurcation_dh(f: FunctionArg, k: usize, alpha: f64) -> PyResult<f64> {
    bif::bifurcation_dh(&f.resolve()?, k, alpha).map_err(bif_err)
}

/// Simple roots of `H` in `interval` as `(α₀, H'(α₀))` pairs.
#[pyfunction]
#[pyo3(signature = (f, k, interval = bif::DEFAULT_ROOT_INTERVAL, grid = bif::DEFAULT_ROOT_GRID))]
fn find_simple_roots(
    f: FunctionArg,
    k: usize,
    interval: (f64, f64),
    grid: usize,
) -> PyResult<Vec<(f64, f64)>> {
    bif::find_simple_roots(&f.resolve()?, k, interval, grid).map_err(bif_err)
}

/// Continues the branch of `[(1-t²)x']' + k(k+1)x = ε f(x)` through
/// `α₀ P_k` over `epsilons`.
#[pyfunction]
#[pyo3(signature = (f, k, alpha0, epsilons, *, N = 64, tol = 1e-10, max_iters = 500, quad_order = None))]
#[allow(non_snake_case, clippy::too_many_arguments)]
fn continue_branch(
    py: Python<'_>,
    f: FunctionArg,
    k: usize,
    alpha0: f64,
    epsilons: Vec<f64>,
    N: usize,
    tol: f64,
    max_iters: usize,
    quad_order: Option<usize>,
) -> PyResult<PyBranchReport> {
    let f = f.resolve()?;
    let opts = options(N, "newton", tol, 0.5, max_iters, None, false, quad_order)?;
    let inner = py
        .detach(|| bif::continue_branch(&f, k, alpha0, &epsilons, &opts))
        .map_err(bif_err)?;
    Ok(PyBranchReport { inner })
}

/// Log-spaced `ε` values from `eps_max` down to `eps_min`.
#[pyfunction]
fn log_grid(eps_max: f64, eps_min: f64, n: usize) -> Vec<f64> {
    bif::log_grid(eps_max, eps_min, n)
}

/// Sup over a fine grid of `|[(1-t²)x']' + μx - ε f(x)|`.
#[pyfunction]
#[pyo3(signature = (coeffs, mu, f, eps = 1.0, fine_quad_order = None))]
fn oracle_residual(
    coeffs: Vec<f64>,
    mu: f64,
    f: FunctionArg,
    eps: f64,
    fine_quad_order: Option<usize>,
) -> PyResult<f64> {
    let cfg = OracleConfig { fine_quad_order, ..OracleConfig::default() };
    let x = LegendreSeries::new(coeffs);
    verify::oracle_residual(&x, mu, &f.resolve()?, eps, &cfg).map_err(value_err)
}

/// Runs the command-line interface with `argv` (the program name is
/// prepended) and returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, argv: Vec<String>) -> i32 {
    let args: Vec<String> = std::iter::once("legendre-bvp".to_string()).chain(argv).collect();
    py.detach(|| legendre_bvp::cli::run(args))
}

#[pymodule]
#[pyo3(name = "legendre_bvp")]
fn legendre_bvp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RefusedError", m.py().get_type::<RefusedError>())?;
    m.add_class::<PyFunction>()?;
    m.add_class::<PySeries>()?;
    m.add_class::<PySolutionReport>()?;
    m.add_class::<PyBranchReport>()?;
    m.add_function(wrap_pyfunction!(eval_legendre, m)?)?;
    m.add_function(wrap_pyfunction!(gauss_rule, m)?)?;
    m.add_function(wrap_pyfunction!(is_resonant, m)?)?;
    m.add_function(wrap_pyfunction!(norm_bound, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(solvability, m)?)?;
    m.add_function(wrap_pyfunction!(bifurcation_h, m)?)?;
    m.add_function(wrap_pyfunction!(bifurcation_dh, m)?)?;
    m.add_function(wrap_pyfunction!(find_simple_roots, m)?)?;
    m.add_function(wrap_pyfunction!(continue_branch, m)?)?;
    m.add_function(wrap_pyfunction!(log_grid, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_residual, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn options_reject_unknown_mode() {
        let err = options(8, "bisect", 1e-10, 0.5, 10, None, false, None);
        assert!(err.is_err());
    }

    #[test]
    fn options_accept_defaults() {
        let opts = options(64, "auto", 1e-10, 0.5, 500, None, false, None).unwrap();
        assert_eq!(opts, SolverOptions::default());
    }
}
