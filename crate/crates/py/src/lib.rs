//! Python bindings. Reports come back as plain dicts (parsed from the same
//! JSON the CLI writes); k-vectors and decompositions are wrapped classes.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use aniso::exterior::{wedge_cols, KVector};
use aniso::polyconvexity::{self, OrientationMode, SamplerParams};
use aniso::{qvalued, rational_approx, suite, GeometricIntegrand, IntegrandSpec};

fn py_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_dict<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(py_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_mode(mode: &str) -> PyResult<OrientationMode> {
    mode.parse().map_err(py_err)
}

/// `integrand` is a built-in name or a JSON spec `{"name": ..., "params": ...}`.
fn integrand(spec: &str, n: usize, k: usize) -> PyResult<GeometricIntegrand> {
    let spec = if spec.trim_start().starts_with('{') {
        serde_json::from_str::<IntegrandSpec>(spec).map_err(py_err)?
    } else {
        IntegrandSpec { name: spec.to_string(), params: serde_json::Value::Null }
    };
    spec.build(n, k).map_err(py_err)
}

#[pyclass(name = "KVector", from_py_object)]
#[derive(Clone)]
struct PyKVector(KVector<f64>);

#[pymethods]
impl PyKVector {
    #[new]
    fn new(n: usize, k: usize, coeffs: Vec<f64>) -> PyResult<Self> {
        KVector::new(n, k, coeffs).map(Self).map_err(py_err)
    }

    /// `e_{i₁}∧…∧e_{i_k}` from 1-based labels.
    #[staticmethod]
    fn blade(n: usize, labels: Vec<usize>) -> PyResult<Self> {
        KVector::blade(n, &labels).map(Self).map_err(py_err)
    }

    /// Wedge of the columns of an n×k matrix given as rows.
    #[staticmethod]
    fn from_columns(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if n == 0 || k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(PyValueError::new_err("expected a non-empty rectangular matrix"));
        }
        Ok(Self(wedge_cols(&nalgebra::DMatrix::from_fn(n, k, |i, j| rows[i][j]))))
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.grade()
    }

    #[getter]
    fn coeffs(&self) -> Vec<f64> {
        self.0.coeffs().to_vec()
    }

    fn wedge(&self, other: &Self) -> PyResult<Self> {
        self.0.wedge(&other.0).map(Self).map_err(py_err)
    }

    fn hodge_star(&self) -> Self {
        Self(self.0.hodge_star())
    }

    fn inner(&self, other: &Self) -> PyResult<f64> {
        self.0.inner(&other.0).map_err(py_err)
    }

    fn norm(&self) -> f64 {
        self.0.norm()
    }

    #[pyo3(signature = (tol = 1e-9))]
    fn is_simple(&self, tol: f64) -> PyResult<bool> {
        self.0.is_simple(tol).map_err(py_err)
    }

    /// Frame as a list of rows; its columns wedge back to this k-vector.
    #[pyo3(signature = (tol = 1e-9))]
    fn factor(&self, tol: f64) -> PyResult<Vec<Vec<f64>>> {
        let w = self.0.factor_simple(tol).map_err(py_err)?;
        Ok(w.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    fn __add__(&self, other: &Self) -> PyResult<Self> {
        self.0.try_add(&other.0).map(Self).map_err(py_err)
    }

    fn __sub__(&self, other: &Self) -> PyResult<Self> {
        self.0.try_sub(&other.0).map(Self).map_err(py_err)
    }

    fn __mul__(&self, s: f64) -> Self {
        Self(self.0.scale(&s))
    }

    fn __rmul__(&self, s: f64) -> Self {
        Self(self.0.scale(&s))
    }

    fn __repr__(&self) -> String {
        format!("KVector(n={}, k={}, coeffs={:?})", self.0.dim(), self.0.grade(), self.0.coeffs())
    }
}

#[pyclass(name = "Decomposition", from_py_object)]
#[derive(Clone)]
struct PyDecomposition(polyconvexity::Decomposition);

#[pymethods]
impl PyDecomposition {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(Self).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(py_err)
    }

    /// Random decomposition of a unit simple k-vector into `d` atoms.
    #[staticmethod]
    #[pyo3(signature = (n, k, d, seed, mode = "any"))]
    fn random(n: usize, k: usize, d: usize, seed: u64, mode: &str) -> PyResult<Self> {
        polyconvexity::random_decomposition(n, k, d, seed, parse_mode(mode)?).map(Self).map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.grade()
    }

    #[getter]
    fn eta0(&self) -> PyKVector {
        PyKVector(self.0.eta0().kvector().clone())
    }

    #[getter]
    fn atoms(&self) -> Vec<(f64, PyKVector)> {
        self.0.atoms().iter().map(|a| (a.weight, PyKVector(a.plane.kvector().clone()))).collect()
    }

    fn weight_sum(&self) -> f64 {
        self.0.weight_sum()
    }

    fn is_positively_oriented(&self) -> bool {
        self.0.is_positively_oriented()
    }

    fn __len__(&self) -> usize {
        self.0.atoms().len()
    }

    fn __repr__(&self) -> String {
        format!("Decomposition(n={}, k={}, atoms={})", self.0.dim(), self.0.grade(), self.0.atoms().len())
    }
}

#[pyfunction]
#[pyo3(signature = (decomposition, c, integrand_spec = "area", mode = "any"))]
fn check_instance(decomposition: &PyDecomposition, c: f64, integrand_spec: &str, mode: &str) -> PyResult<f64> {
    let dec = &decomposition.0;
    let psi = integrand(integrand_spec, dec.dim(), dec.grade())?;
    polyconvexity::check_instance(&psi, c, dec, parse_mode(mode)?).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (n, k, c, budget = 10_000, seed = 0, integrand_spec = "area", mode = "any"))]
#[allow(clippy::too_many_arguments)]
fn search_counterexample(
    py: Python<'_>,
    n: usize,
    k: usize,
    c: f64,
    budget: usize,
    seed: u64,
    integrand_spec: &str,
    mode: &str,
) -> PyResult<Option<(PyDecomposition, f64)>> {
    let psi = integrand(integrand_spec, n, k)?;
    let params = SamplerParams::new(n, k, parse_mode(mode)?);
    let hit = py
        .detach(|| polyconvexity::search_counterexample(&psi, c, budget, &params, seed))
        .map_err(py_err)?;
    Ok(hit.map(|(d, g)| (PyDecomposition(d), g)))
}

#[pyfunction]
#[pyo3(signature = (n, k, c, n_dirs = 50, n_atoms = 200, seed = 0, integrand_spec = "area", mode = "any"))]
#[allow(clippy::too_many_arguments)]
fn certify<'py>(
    py: Python<'py>,
    n: usize,
    k: usize,
    c: f64,
    n_dirs: usize,
    n_atoms: usize,
    seed: u64,
    integrand_spec: &str,
    mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let psi = integrand(integrand_spec, n, k)?;
    let mode = parse_mode(mode)?;
    let rep = py
        .detach(|| polyconvexity::certify_sampled(&psi, c, n_dirs, n_atoms, seed, mode))
        .map_err(py_err)?;
    to_dict(py, &rep)
}

#[pyfunction]
fn approximate_decomposition<'py>(py: Python<'py>, decomposition: &PyDecomposition, eps: f64) -> PyResult<Bound<'py, PyAny>> {
    let rd = rational_approx::approximate_decomposition(&decomposition.0, eps).map_err(py_err)?;
    to_dict(py, &rd)
}

/// Distance between two unordered Q-tuples of points, each a list of rows.
#[pyfunction]
fn metric_g(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    let a = qvalued::QPoint::from_rows(&a).map_err(py_err)?;
    let b = qvalued::QPoint::from_rows(&b).map_err(py_err)?;
    qvalued::metric_g(&a, &b).map_err(py_err)
}

/// Minimum-cost assignment; `result[row] = column`.
#[pyfunction]
fn hungarian(cost: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
    let n = cost.len();
    if cost.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("cost matrix must be square"));
    }
    Ok(qvalued::hungarian(&nalgebra::DMatrix::from_fn(n, n, |i, j| cost[i][j])))
}

#[pyfunction]
#[pyo3(signature = (n, k, c, seed = 0, trials = 200, integrand_spec = "area"))]
fn equivalence_suite<'py>(
    py: Python<'py>,
    n: usize,
    k: usize,
    c: f64,
    seed: u64,
    trials: usize,
    integrand_spec: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let psi = integrand(integrand_spec, n, k)?;
    let rep = py.detach(|| suite::equivalence_suite(&psi, c, seed, trials)).map_err(py_err)?;
    to_dict(py, &rep)
}

#[pymodule(name = "aniso")]
fn aniso_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKVector>()?;
    m.add_class::<PyDecomposition>()?;
    m.add_function(wrap_pyfunction!(check_instance, m)?)?;
    m.add_function(wrap_pyfunction!(search_counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(approximate_decomposition, m)?)?;
    m.add_function(wrap_pyfunction!(metric_g, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian, m)?)?;
    m.add_function(wrap_pyfunction!(equivalence_suite, m)?)?;
    m.add("COUNTEREXAMPLE_THRESHOLD", polyconvexity::COUNTEREXAMPLE_THRESHOLD)?;
    Ok(())
}
