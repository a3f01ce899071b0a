//! Python bindings. Fields cross the boundary as plain lists: nodal values
//! for scalar fields, one `[x]` or `[x, y]` row per cell for vector fields.

use std::sync::Arc;

use ::onelap as core;
use core::{
    ContinuationOptions, Error, Exponents, LimitOptions, PqOptions, ProblemSpec, ScalarField,
    ScheduleParams, Thresholds, VectorField, Weight,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(err: Error) -> PyErr {
    match core::cli::exit_code(&err) {
        core::cli::EXIT_SOLVER => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn vectors(z: &VectorField) -> Vec<Vec<f64>> {
    (0..z.mesh().n_cells()).map(|c| z.get(c).to_vec()).collect()
}

/// Evaluates `obj` at every node: a callable taking the coordinate list, a
/// number, or a list of nodal values.
fn sample(
    py: Python<'_>,
    mesh: &core::Mesh,
    obj: &Py<PyAny>,
    nodes: &[usize],
) -> PyResult<Vec<f64>> {
    let obj = obj.bind(py);
    if obj.is_callable() {
        nodes
            .iter()
            .map(|&i| obj.call1((mesh.node(i).to_vec(),))?.extract::<f64>())
            .collect()
    } else if let Ok(c) = obj.extract::<f64>() {
        Ok(vec![c; nodes.len()])
    } else {
        let all: Vec<f64> = obj.extract()?;
        if all.len() != mesh.n_nodes() {
            return Err(PyValueError::new_err(format!(
                "expected {} nodal values, got {}",
                mesh.n_nodes(),
                all.len()
            )));
        }
        Ok(nodes.iter().map(|&i| all[i]).collect())
    }
}

fn nodal_weight(py: Python<'_>, mesh: &Arc<core::Mesh>, weight: &Py<PyAny>) -> PyResult<Weight> {
    let all: Vec<usize> = (0..mesh.n_nodes()).collect();
    Weight::new(mesh, sample(py, mesh, weight, &all)?).map_err(to_py)
}

fn boundary_values(py: Python<'_>, mesh: &core::Mesh, h: &Py<PyAny>) -> PyResult<Vec<f64>> {
    sample(py, mesh, h, mesh.boundary_nodes())
}

/// Uniform P1 mesh of an interval or a rectangle.
#[pyclass(name = "Mesh", frozen)]
struct PyMesh(Arc<core::Mesh>);

#[pymethods]
impl PyMesh {
    #[staticmethod]
    fn interval(n_cells: usize, length: f64) -> PyResult<Self> {
        core::Mesh::interval(n_cells, length)
            .map(PyMesh)
            .map_err(to_py)
    }

    #[staticmethod]
    fn rectangle(nx: usize, ny: usize, lx: f64, ly: f64) -> PyResult<Self> {
        core::Mesh::rectangle(nx, ny, lx, ly)
            .map(PyMesh)
            .map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.0.n_nodes()
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.0.n_cells()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.mesh_size()
    }

    fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.0.n_nodes())
            .map(|i| self.0.node(i).to_vec())
            .collect()
    }

    fn boundary_nodes(&self) -> Vec<usize> {
        self.0.boundary_nodes().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh(dim={}, nodes={}, cells={})",
            self.0.dim(),
            self.0.n_nodes(),
            self.0.n_cells()
        )
    }
}

/// A validated problem: either the p,q problem or the limit problem.
#[pyclass(name = "Problem", frozen)]
struct PyProblem(ProblemSpec);

#[pymethods]
impl PyProblem {
    /// `weight` and `boundary` are callables of the coordinate list, numbers,
    /// or lists of nodal values.
    #[staticmethod]
    fn pq(
        py: Python<'_>,
        mesh: &PyMesh,
        weight: Py<PyAny>,
        p: f64,
        q: f64,
        boundary: Py<PyAny>,
    ) -> PyResult<Self> {
        let w = nodal_weight(py, &mesh.0, &weight)?;
        let e = Exponents::new(p, q, mesh.0.dim()).map_err(to_py)?;
        let b = boundary_values(py, &mesh.0, &boundary)?;
        ProblemSpec::pq(w, e, b).map(PyProblem).map_err(to_py)
    }

    #[staticmethod]
    fn limit(
        py: Python<'_>,
        mesh: &PyMesh,
        weight: Py<PyAny>,
        q: f64,
        boundary: Py<PyAny>,
    ) -> PyResult<Self> {
        let w = nodal_weight(py, &mesh.0, &weight)?;
        let b = boundary_values(py, &mesh.0, &boundary)?;
        ProblemSpec::limit(w, q, b, 0.0)
            .map(PyProblem)
            .map_err(to_py)
    }

    /// Builds the problem described by a TOML run configuration.
    #[staticmethod]
    #[pyo3(signature = (text, kind = "pq"))]
    fn from_config(text: &str, kind: &str) -> PyResult<Self> {
        let cfg = core::config::RunConfig::from_toml_str(text).map_err(to_py)?;
        match kind {
            "pq" => cfg.pq_spec(),
            "limit" => cfg.limit_spec(),
            other => {
                return Err(PyValueError::new_err(format!(
                    "kind must be 'pq' or 'limit', got {other:?}"
                )))
            }
        }
        .map(PyProblem)
        .map_err(to_py)
    }

    #[getter]
    fn mesh(&self) -> PyMesh {
        PyMesh(self.0.mesh().clone())
    }

    #[getter]
    fn p(&self) -> Option<f64> {
        self.0.p()
    }

    #[getter]
    fn q(&self) -> f64 {
        self.0.q()
    }

    /// `F_p(u)` for a p,q problem, `I(u)` for the limit problem.
    fn energy(&self, u: Vec<f64>) -> PyResult<f64> {
        let u = ScalarField::new(self.0.mesh(), u).map_err(to_py)?;
        let r = match self.0.p() {
            Some(_) => core::energy_fp(&u, &self.0),
            None => core::energy_i(&u, &self.0),
        };
        r.map(|r| r.total).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        match self.0.p() {
            Some(p) => format!(
                "Problem.pq(p={p}, q={}, nodes={})",
                self.0.q(),
                self.0.mesh().n_nodes()
            ),
            None => format!(
                "Problem.limit(q={}, nodes={})",
                self.0.q(),
                self.0.mesh().n_nodes()
            ),
        }
    }
}

#[pyclass(name = "PqResult", frozen, get_all)]
struct PqResult {
    u: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    tau: Vec<Vec<f64>>,
    energy: f64,
    converged: bool,
    iterations: usize,
    grad_norm: f64,
    weak_residual: f64,
    lambda_p: f64,
}

#[pyfunction]
#[pyo3(signature = (problem, tol = 1e-9, max_iter = 200, init = None))]
fn solve_pq(
    py: Python<'_>,
    problem: &PyProblem,
    tol: f64,
    max_iter: usize,
    init: Option<Vec<f64>>,
) -> PyResult<PqResult> {
    let spec = &problem.0;
    let init = init
        .map(|v| ScalarField::new(spec.mesh(), v))
        .transpose()
        .map_err(to_py)?;
    let sol = py
        .detach(|| core::solve_pq(spec, init.as_ref(), PqOptions { tol, max_iter }))
        .map_err(to_py)?;
    Ok(PqResult {
        weak_residual: core::weak_residual_pq(&sol, spec).map_err(to_py)?,
        sigma: vectors(&sol.sigma),
        tau: vectors(&sol.tau),
        energy: sol.energy.total,
        converged: sol.converged,
        iterations: sol.iterations,
        grad_norm: sol.grad_norm,
        lambda_p: sol.lambda,
        u: sol.u.into_values(),
    })
}

#[pyclass(name = "ContinuationResult", frozen, get_all)]
struct ContinuationResult {
    p: Vec<f64>,
    energy_fp: Vec<f64>,
    energy_i: Vec<f64>,
    lambda_p: Vec<f64>,
    sigma_inf: Vec<f64>,
    u_star: Vec<f64>,
    z_star: Vec<Vec<f64>>,
    lambda_ratio: f64,
}

#[pyfunction]
#[pyo3(signature = (problem, p_start, ratio = 0.5, steps = 10))]
fn run_continuation(
    py: Python<'_>,
    problem: &PyProblem,
    p_start: f64,
    ratio: f64,
    steps: usize,
) -> PyResult<ContinuationResult> {
    let params = ScheduleParams {
        p_start,
        ratio,
        steps,
    };
    let (trace, cand) = py
        .detach(|| core::run_continuation(&problem.0, params, &ContinuationOptions::default()))
        .map_err(to_py)?;
    let col = |f: fn(&core::continuation::StepRecord) -> f64| trace.records.iter().map(f).collect();
    Ok(ContinuationResult {
        p: col(|r| r.p),
        energy_fp: col(|r| r.energy_fp),
        energy_i: col(|r| r.energy_i),
        lambda_p: col(|r| r.lambda_p),
        sigma_inf: col(|r| r.sigma_inf),
        lambda_ratio: trace.lambda_ratio(),
        z_star: vectors(&cand.z_star),
        u_star: cand.u_star.into_values(),
    })
}

#[pyclass(name = "LimitResult", frozen, get_all)]
struct LimitResult {
    u_star: Vec<f64>,
    z_star: Vec<Vec<f64>>,
    energy_i: f64,
    tv_term: f64,
    q_term: f64,
    iterations: Vec<usize>,
}

#[pyfunction]
#[pyo3(signature = (problem, eps_schedule = None, tol = 1e-10, init = None))]
fn solve_limit(
    py: Python<'_>,
    problem: &PyProblem,
    eps_schedule: Option<Vec<f64>>,
    tol: f64,
    init: Option<Vec<f64>>,
) -> PyResult<LimitResult> {
    let spec = &problem.0;
    let mut opts = LimitOptions {
        tol,
        ..LimitOptions::default()
    };
    if let Some(s) = eps_schedule {
        opts.eps_schedule = s;
    }
    let init = init
        .map(|v| ScalarField::new(spec.mesh(), v))
        .transpose()
        .map_err(to_py)?;
    let sol = py
        .detach(|| core::solve_limit(spec, &opts, init.as_ref()))
        .map_err(to_py)?;
    Ok(LimitResult {
        z_star: vectors(&sol.z_star),
        energy_i: sol.report.energy_i,
        tv_term: sol.report.tv_term,
        q_term: sol.report.q_term,
        iterations: sol.report.stages.iter().map(|s| s.iterations).collect(),
        u_star: sol.u_star.into_values(),
    })
}

#[pyclass(name = "Certificate", frozen, get_all)]
struct PyCertificate {
    residual_div: f64,
    z_inf: f64,
    alignment_gap: f64,
    alignment_gap_active: f64,
    active_cells: usize,
    energy_i: f64,
    residual_ok: bool,
    bound_ok: bool,
    alignment_ok: bool,
    passed: bool,
}

#[pymethods]
impl PyCertificate {
    fn __bool__(&self) -> bool {
        self.passed
    }

    fn __repr__(&self) -> String {
        format!(
            "Certificate(pass={}, residual_div={:e}, z_inf={}, alignment_gap_active={:e})",
            self.passed, self.residual_div, self.z_inf, self.alignment_gap_active
        )
    }
}

/// Checks the weak-solution certificate of `(u, z)` with the mesh-scaled
/// default thresholds.
#[pyfunction]
fn verify_certificate(
    problem: &PyProblem,
    u: Vec<f64>,
    z: Vec<Vec<f64>>,
) -> PyResult<PyCertificate> {
    let spec = &problem.0;
    let u = ScalarField::new(spec.mesh(), u).map_err(to_py)?;
    let z = VectorField::new(spec.mesh(), z).map_err(to_py)?;
    let c =
        core::verify_certificate(&u, &z, spec, Thresholds::for_mesh(spec.mesh())).map_err(to_py)?;
    Ok(PyCertificate {
        residual_div: c.residual_div,
        z_inf: c.z_inf,
        alignment_gap: c.alignment_gap,
        alignment_gap_active: c.alignment_gap_active,
        active_cells: c.active_cells,
        energy_i: c.energy_i,
        residual_ok: c.residual_ok,
        bound_ok: c.bound_ok,
        alignment_ok: c.alignment_ok,
        passed: c.pass,
    })
}

/// Reference 1D solution from the constant-flux reduction.
#[pyclass(name = "Oracle", frozen)]
struct PyOracle(core::OracleSolution);

#[pymethods]
impl PyOracle {
    fn u(&self, x: f64) -> f64 {
        self.0.u(x)
    }

    fn du(&self, x: f64) -> f64 {
        self.0.du(x)
    }

    fn z(&self, x: f64) -> f64 {
        self.0.z(x)
    }

    #[getter]
    fn flux(&self) -> Option<f64> {
        self.0.flux()
    }

    #[getter]
    fn energy(&self) -> f64 {
        self.0.energy()
    }

    #[getter]
    fn length(&self) -> f64 {
        self.0.length()
    }
}

/// Wraps a Python callable of one float; failures evaluate to NaN, which the
/// oracle rejects as an infeasible weight.
fn weight_closure(weight: Py<PyAny>) -> impl Fn(f64) -> f64 + Send + Sync + 'static {
    move |x| {
        Python::attach(|py| {
            weight
                .bind(py)
                .call1((x,))
                .and_then(|v| v.extract())
                .unwrap_or(f64::NAN)
        })
    }
}

fn check_weight(py: Python<'_>, weight: &Py<PyAny>, length: f64) -> PyResult<()> {
    for x in [0.0, 0.5 * length, length] {
        weight.bind(py).call1((x,))?.extract::<f64>()?;
    }
    Ok(())
}

#[pyfunction]
#[pyo3(signature = (weight, q, h0, h1, length = 1.0, quad_n = core::oracle1d::DEFAULT_QUAD_N))]
fn oracle_limit_1d(
    py: Python<'_>,
    weight: Py<PyAny>,
    q: f64,
    h0: f64,
    h1: f64,
    length: f64,
    quad_n: usize,
) -> PyResult<PyOracle> {
    check_weight(py, &weight, length)?;
    core::oracle_limit_1d(weight_closure(weight), q, h0, h1, length, quad_n)
        .map(PyOracle)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (weight, p, q, h0, h1, length = 1.0, quad_n = core::oracle1d::DEFAULT_QUAD_N))]
#[allow(clippy::too_many_arguments)]
fn oracle_pq_1d(
    py: Python<'_>,
    weight: Py<PyAny>,
    p: f64,
    q: f64,
    h0: f64,
    h1: f64,
    length: f64,
    quad_n: usize,
) -> PyResult<PyOracle> {
    check_weight(py, &weight, length)?;
    core::oracle_pq_1d(weight_closure(weight), p, q, h0, h1, length, quad_n)
        .map(PyOracle)
        .map_err(to_py)
}

#[pymodule]
#[pyo3(name = "onelap")]
fn onelap_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PqResult>()?;
    m.add_class::<ContinuationResult>()?;
    m.add_class::<LimitResult>()?;
    m.add_class::<PyCertificate>()?;
    m.add_class::<PyOracle>()?;
    m.add_function(wrap_pyfunction!(solve_pq, m)?)?;
    m.add_function(wrap_pyfunction!(run_continuation, m)?)?;
    m.add_function(wrap_pyfunction!(solve_limit, m)?)?;
    m.add_function(wrap_pyfunction!(verify_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_limit_1d, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_pq_1d, m)?)?;
    Ok(())
}
