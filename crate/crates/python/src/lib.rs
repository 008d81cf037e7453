//! Python bindings for `nclass`.

use nclass::criteria::{evaluate_all, DEFAULT_ELL_MAX};
use nclass::oracle::{equivalence_suite, EquivalenceConfig};
use nclass::{
    antinormal_ladder, modified_moment, normal_ladder, CutoffPolicy, Error, NumberDistribution, StateFamily,
    StateModification,
};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::UndefinedState { .. } | Error::LadderTooShort { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyArithmeticError::new_err(e.to_string()),
    }
}

fn policy(eps_tail: f64, max_cutoff: usize) -> CutoffPolicy {
    CutoffPolicy {
        eps_tail,
        max_cutoff,
        ..CutoffPolicy::default()
    }
}

fn modification(subtract: Option<usize>, add: Option<usize>) -> PyResult<StateModification> {
    match (subtract, add) {
        (Some(_), Some(_)) => Err(PyValueError::new_err("pass subtract or add, not both")),
        (Some(n), None) => Ok(StateModification::subtract(n)),
        (None, Some(m)) => Ok(StateModification::add(m)),
        (None, None) => Ok(StateModification::IDENTITY),
    }
}

/// Truncated photon-number distribution.
#[pyclass(name = "Distribution", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDistribution {
    inner: NumberDistribution,
}

impl PyDistribution {
    fn build(family: StateFamily, eps_tail: f64, max_cutoff: usize) -> PyResult<Self> {
        let policy = policy(eps_tail, max_cutoff).covering_order(2 * DEFAULT_ELL_MAX + 4);
        let inner = family.build(&policy).map_err(to_py)?;
        Ok(Self { inner })
    }
}

#[pymethods]
impl PyDistribution {
    #[staticmethod]
    #[pyo3(signature = (alpha_sq, eps_tail=1e-12, max_cutoff=4096))]
    fn coherent(alpha_sq: f64, eps_tail: f64, max_cutoff: usize) -> PyResult<Self> {
        Self::build(StateFamily::Coherent { alpha_sq }, eps_tail, max_cutoff)
    }

    #[staticmethod]
    #[pyo3(signature = (nbar, eps_tail=1e-12, max_cutoff=4096))]
    fn thermal(nbar: f64, eps_tail: f64, max_cutoff: usize) -> PyResult<Self> {
        Self::build(StateFamily::Thermal { nbar }, eps_tail, max_cutoff)
    }

    #[staticmethod]
    #[pyo3(signature = (r, eps_tail=1e-12, max_cutoff=4096))]
    fn squeezed(r: f64, eps_tail: f64, max_cutoff: usize) -> PyResult<Self> {
        Self::build(StateFamily::SqueezedVacuum { r }, eps_tail, max_cutoff)
    }

    #[staticmethod]
    fn fock(n: usize) -> Self {
        Self {
            inner: nclass::build_fock(n),
        }
    }

    /// Arbitrary nonnegative weights; they are renormalized.
    #[staticmethod]
    fn from_probs(probs: Vec<f64>) -> PyResult<Self> {
        let inner = NumberDistribution::new(probs, 0.0).map_err(to_py)?.renormalized();
        Ok(Self { inner })
    }

    #[getter]
    fn probs(&self) -> Vec<f64> {
        self.inner.probs().to_vec()
    }

    #[getter]
    fn cutoff(&self) -> usize {
        self.inner.cutoff()
    }

    #[getter]
    fn tail_bound(&self) -> f64 {
        self.inner.tail_bound()
    }

    #[getter]
    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn __len__(&self) -> usize {
        self.inner.probs().len()
    }

    fn __repr__(&self) -> String {
        format!("Distribution(cutoff={}, mean={})", self.inner.cutoff(), self.inner.mean())
    }
}

/// `N_0..=N_{k_max}` with `N_k = <a†^k a^k>`.
#[pyfunction]
fn normal_ladder_values(dist: &PyDistribution, k_max: usize) -> PyResult<Vec<f64>> {
    Ok(normal_ladder(&dist.inner, k_max).map_err(to_py)?.values().to_vec())
}

/// `N_0..=N_{k_max}` with `N_k = <a^k a†^k>`.
#[pyfunction]
fn antinormal_ladder_values(dist: &PyDistribution, k_max: usize) -> PyResult<Vec<f64>> {
    Ok(antinormal_ladder(&dist.inner, k_max).map_err(to_py)?.values().to_vec())
}

/// Factorial moment `<a†^x a^x>` of the modified state.
#[pyfunction]
#[pyo3(signature = (dist, x, subtract=None, add=None))]
fn factorial_moment(dist: &PyDistribution, x: usize, subtract: Option<usize>, add: Option<usize>) -> PyResult<f64> {
    modified_moment(&dist.inner, modification(subtract, add)?, x).map_err(to_py)
}

/// Every criterion as a dict; undefined values come back as strings.
#[pyfunction]
#[pyo3(signature = (dist, subtract=None, add=None, ell_max=DEFAULT_ELL_MAX))]
fn evaluate<'py>(
    py: Python<'py>,
    dist: &PyDistribution,
    subtract: Option<usize>,
    add: Option<usize>,
    ell_max: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let report = evaluate_all(&dist.inner, modification(subtract, add)?, ell_max).map_err(to_py)?;
    let text = serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Runs the shortcut-versus-oracle suite; returns `(passed, cells, max_deviation)`.
#[pyfunction]
#[pyo3(signature = (tol=None))]
fn selfcheck(py: Python<'_>, tol: Option<f64>) -> PyResult<(bool, usize, f64)> {
    let mut config = EquivalenceConfig::default();
    if let Some(t) = tol {
        config.tol_subtract = t;
        config.tol_add = t;
    }
    let report = py.detach(|| equivalence_suite(&config)).map_err(to_py)?;
    Ok((report.passed(), report.cells.len(), report.max_deviation()))
}

#[pymodule]
fn nclass_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDistribution>()?;
    m.add_function(wrap_pyfunction!(normal_ladder_values, m)?)?;
    m.add_function(wrap_pyfunction!(antinormal_ladder_values, m)?)?;
    m.add_function(wrap_pyfunction!(factorial_moment, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(selfcheck, m)?)?;
    Ok(())
}
