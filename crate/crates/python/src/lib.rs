//! Python bindings. Results come back as plain dicts and lists.

use heatctl::bangbang::bang_bang_check;
use heatctl::oracle::oracle_eps as core_oracle_eps;
use heatctl::scenario::{Model, Scenario as CoreScenario};
use heatctl::target::solve_eps as core_solve_eps;
use heatctl::time::{
    eps_curve as core_eps_curve, solve_tau as core_solve_tau, verify_inverse as core_verify_inverse,
};
use heatctl::Error;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use serde_json::json;

create_exception!(heatctl_py, HeatctlError, PyException);
create_exception!(heatctl_py, InfeasibleError, HeatctlError);
create_exception!(heatctl_py, ConvergenceError, HeatctlError);

fn to_py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::InvalidArgument(_) | Error::Scenario(_) => PyValueError::new_err(msg),
        Error::Infeasible { .. } => InfeasibleError::new_err(msg),
        Error::NotConverged { .. }
        | Error::DegenerateCertificate { .. }
        | Error::MonotonicityViolation { .. } => ConvergenceError::new_err(msg),
        _ => HeatctlError::new_err(msg),
    }
}

fn to_py(py: Python<'_>, value: &impl Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| HeatctlError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// A scenario: domain, control region, horizon, bound and discretization.
#[pyclass(name = "Scenario", module = "heatctl_py", from_py_object)]
#[derive(Clone)]
pub struct PyScenario {
    inner: CoreScenario,
}

impl PyScenario {
    fn model(&self) -> PyResult<Model> {
        Model::new(&self.inner).map_err(to_py_err)
    }
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        CoreScenario::preset(name)
            .map(|inner| PyScenario { inner })
            .map_err(to_py_err)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        CoreScenario::from_toml_str(text)
            .map(|inner| PyScenario { inner })
            .map_err(to_py_err)
    }

    /// Scenario file, or preset name when no such file exists.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        CoreScenario::load(path)
            .map(|inner| PyScenario { inner })
            .map_err(to_py_err)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    /// Copy with K, N_t and the quadrature order doubled.
    fn refined(&self) -> Self {
        PyScenario {
            inner: self.inner.refined(),
        }
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon
    }

    #[getter]
    fn modes(&self) -> usize {
        self.inner.modes
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }

    /// Distance of the uncontrolled terminal state from the origin.
    fn eps_terminal(&self) -> PyResult<f64> {
        Ok(self.model()?.eps_terminal())
    }

    fn __eq__(&self, other: &PyScenario) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, T={}, K={}, N_t={})",
            self.inner.name, self.inner.horizon, self.inner.modes, self.inner.steps
        )
    }
}

fn options(model: &Model, seed: Option<u64>) -> heatctl::SolveOptions {
    let opts = model.solve_options();
    match seed {
        Some(s) => opts.with_seed(s),
        None => opts,
    }
}

/// Optimal target value eps(tau) with its dual certificate and control norms.
#[pyfunction]
#[pyo3(signature = (scenario, tau, seed = None))]
fn solve_eps(
    py: Python<'_>,
    scenario: &PyScenario,
    tau: f64,
    seed: Option<u64>,
) -> PyResult<Py<PyAny>> {
    let model = scenario.model()?;
    let sol = py
        .detach(|| core_solve_eps(tau, &model, &options(&model, seed)))
        .map_err(to_py_err)?;
    to_py(py, &sol.record())
}

/// Optimal start time tau(eps).
#[pyfunction]
#[pyo3(signature = (scenario, eps, seed = None))]
fn solve_tau(
    py: Python<'_>,
    scenario: &PyScenario,
    eps: f64,
    seed: Option<u64>,
) -> PyResult<Py<PyAny>> {
    let model = scenario.model()?;
    let sol = py
        .detach(|| core_solve_tau(eps, &model, &options(&model, seed)))
        .map_err(to_py_err)?;
    to_py(py, &sol.record())
}

/// eps(tau) on an ascending grid plus monotonicity and Lipschitz diagnostics.
#[pyfunction]
fn eps_curve(py: Python<'_>, scenario: &PyScenario, taus: Vec<f64>) -> PyResult<Py<PyAny>> {
    let model = scenario.model()?;
    let curve = py
        .detach(|| core_eps_curve(&taus, &model, &model.solve_options()))
        .map_err(to_py_err)?;
    let value = json!({
        "tau": curve.points.iter().map(|p| p.tau).collect::<Vec<_>>(),
        "eps": curve.points.iter().map(|p| p.eps).collect::<Vec<_>>(),
        "converged": curve.points.iter().map(|p| p.converged).collect::<Vec<_>>(),
        "eps_terminal": curve.eps_terminal,
        "monotone": curve.monotone(),
        "lipschitz_constant": curve.lipschitz_constant,
        "lipschitz_ok": curve.lipschitz_ok(),
        "degenerate": curve.degenerate,
    });
    to_py(py, &value)
}

/// eps(tau) from the direct transcription.
#[pyfunction]
fn oracle_eps(py: Python<'_>, scenario: &PyScenario, tau: f64) -> PyResult<Py<PyAny>> {
    let model = scenario.model()?;
    let sol = py
        .detach(|| core_oracle_eps(tau, &model))
        .map_err(to_py_err)?;
    let value = json!({
        "tau": sol.tau,
        "eps": sol.eps,
        "iterations": sol.iterations,
        "duality_gap": sol.duality_gap,
        "control_norms": sol.control.step_norms(),
    });
    to_py(py, &value)
}

/// Saturation residuals of the optimal control at tau(eps). `source` picks
/// the dual reconstruction ("dual") or the transcription optimum ("oracle").
#[pyfunction]
#[pyo3(signature = (scenario, eps, source = "dual"))]
fn bang_bang(py: Python<'_>, scenario: &PyScenario, eps: f64, source: &str) -> PyResult<Py<PyAny>> {
    let model = scenario.model()?;
    let opts = model.solve_options();
    let report = py
        .detach(|| -> heatctl::Result<_> {
            let time = core_solve_tau(eps, &model, &opts)?;
            match source {
                "dual" => Ok(bang_bang_check(&time, &model)),
                "oracle" => Ok(bang_bang_check(&core_oracle_eps(time.tau, &model)?, &model)),
                other => Err(Error::InvalidArgument(format!(
                    "source must be \"dual\" or \"oracle\", got {other:?}"
                ))),
            }
        })
        .map_err(to_py_err)?;
    to_py(py, &report)
}

/// Round-trip residuals of tau(eps(tau)) and eps(tau(eps)).
#[pyfunction]
#[pyo3(signature = (scenario, n_probes = 5))]
fn verify_inverse(py: Python<'_>, scenario: &PyScenario, n_probes: usize) -> PyResult<Py<PyAny>> {
    let model = scenario.model()?;
    let report = py
        .detach(|| core_verify_inverse(&model, n_probes, &model.solve_options()))
        .map_err(to_py_err)?;
    to_py(py, &report)
}

#[pymodule]
pub fn heatctl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(solve_eps, m)?)?;
    m.add_function(wrap_pyfunction!(solve_tau, m)?)?;
    m.add_function(wrap_pyfunction!(eps_curve, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_eps, m)?)?;
    m.add_function(wrap_pyfunction!(bang_bang, m)?)?;
    m.add_function(wrap_pyfunction!(verify_inverse, m)?)?;
    m.add("HeatctlError", m.py().get_type::<HeatctlError>())?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add("ConvergenceError", m.py().get_type::<ConvergenceError>())?;
    m.add("PRESETS", heatctl::scenario::PRESETS.to_vec())?;
    Ok(())
}
