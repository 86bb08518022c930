//! Python bindings: `pywirtinger`.
//!
//! Matrices cross the boundary as `Matrix` objects built from nested lists
//! of Python complex numbers. Expressions carry their declarations, so
//! `Expr("tr(Z*adj(Z))", "Z 3 unstructured")` is all a caller needs.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use wirtinger::fd::{grad_check, FdConfig, FdScheme};
use wirtinger::io::write_matrix_text;
use wirtinger::optimizer::{self, Direction, SolveOptions};
use wirtinger::{
    canonicalize_scalar, derive, derive_unstructured, eval_scalar, free_vars, holomorphy_test, parse, pretty_print,
    pretty_print_matrix, ComplexMatrix, Decls, Error, EvalEnv, ScalarExpr, C64,
};

create_exception!(pywirtinger, WirtingerError, PyException, "Base class for library errors.");
create_exception!(pywirtinger, ParseError, WirtingerError, "Expression or declaration did not parse.");
create_exception!(pywirtinger, InfeasibleError, WirtingerError, "The constraints admit no solution.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Syntax { .. } => ParseError::new_err(e.to_string()),
        Error::Infeasible(_) => InfeasibleError::new_err(e.to_string()),
        _ => WirtingerError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for wirtinger::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Dense complex square matrix.
#[pyclass(name = "Matrix", module = "pywirtinger", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyMatrix {
    inner: ComplexMatrix,
}

impl From<ComplexMatrix> for PyMatrix {
    fn from(inner: ComplexMatrix) -> Self {
        Self { inner }
    }
}

#[pymethods]
impl PyMatrix {
    /// `rows` is a square list of lists of numbers (real or complex).
    #[new]
    fn new(rows: Vec<Vec<C64>>) -> PyResult<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(WirtingerError::new_err(format!("matrix rows must all have length {n}")));
        }
        Ok(ComplexMatrix::from_row_major(n, rows.into_iter().flatten().collect()).into())
    }

    #[staticmethod]
    fn identity(n: usize) -> Self {
        ComplexMatrix::identity(n).into()
    }

    #[staticmethod]
    fn diag(values: Vec<C64>) -> Self {
        ComplexMatrix::from_diag(&values).into()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn rows(&self) -> Vec<Vec<C64>> {
        let n = self.inner.n();
        self.inner.data().chunks(n.max(1)).take(n).map(|r| r.to_vec()).collect()
    }

    fn __getitem__(&self, ij: (usize, usize)) -> PyResult<C64> {
        let n = self.inner.n();
        if ij.0 >= n || ij.1 >= n {
            return Err(pyo3::exceptions::PyIndexError::new_err(format!("index {ij:?} out of range for {n}x{n}")));
        }
        Ok(self.inner.data()[ij.0 * n + ij.1])
    }

    fn trace(&self) -> C64 {
        self.inner.trace()
    }

    fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }

    fn adjoint(&self) -> Self {
        self.inner.adjoint().into()
    }

    fn __sub__(&self, other: PyRef<'_, PyMatrix>) -> PyResult<Self> {
        if other.inner.n() != self.inner.n() {
            return Err(WirtingerError::new_err("dimension mismatch"));
        }
        Ok(self.inner.sub(&other.inner).into())
    }

    fn __repr__(&self) -> String {
        format!("Matrix(\n{})", write_matrix_text(&self.inner).trim_end())
    }
}

fn env_from(bindings: &HashMap<String, PyRef<'_, PyMatrix>>, params: Option<HashMap<String, f64>>) -> EvalEnv {
    let mut env = EvalEnv::new();
    for (name, m) in bindings {
        env = env.bind(name.clone(), m.inner.clone());
    }
    for (name, v) in params.unwrap_or_default() {
        env = env.param(name, v);
    }
    env
}

/// Scalar expression together with the declarations it was parsed under.
#[pyclass(name = "Expr", module = "pywirtinger", frozen)]
pub struct PyExpr {
    expr: ScalarExpr,
    decls: Decls,
}

#[pymethods]
impl PyExpr {
    /// `decls` uses the declaration-file syntax: one `name dim structure
    /// [const]` per line.
    #[new]
    fn new(text: &str, decls: &str) -> PyResult<Self> {
        let decls = Decls::parse(decls).py_err()?;
        let expr = parse(text, &decls).py_err()?;
        Ok(Self { expr, decls })
    }

    fn canonical(&self) -> Self {
        Self { expr: canonicalize_scalar(&self.expr), decls: self.decls.clone() }
    }

    fn free_vars(&self) -> Vec<String> {
        free_vars(&self.expr).into_keys().collect()
    }

    fn is_holomorphic(&self, var: &str) -> PyResult<bool> {
        holomorphy_test(&self.expr, var).py_err()
    }

    /// Symbolic `(df/dZ, df/dZ*)` as printable strings.
    #[pyo3(signature = (var, structure_aware = true))]
    fn derive(&self, var: &str, structure_aware: bool) -> PyResult<(String, String)> {
        let p = self.pair(var, structure_aware)?;
        Ok((pretty_print_matrix(&p.d_dz), pretty_print_matrix(&p.d_dzconj)))
    }

    #[pyo3(signature = (bindings, params = None))]
    fn eval(&self, bindings: HashMap<String, PyRef<'_, PyMatrix>>, params: Option<HashMap<String, f64>>) -> PyResult<C64> {
        let env = env_from(&bindings, params);
        env.validate(&self.decls).py_err()?;
        eval_scalar(&self.expr, &env).py_err()
    }

    /// Numeric `(df/dZ, df/dZ*)` at the bound point.
    #[pyo3(signature = (var, bindings, params = None, structure_aware = true))]
    fn gradient(
        &self,
        var: &str,
        bindings: HashMap<String, PyRef<'_, PyMatrix>>,
        params: Option<HashMap<String, f64>>,
        structure_aware: bool,
    ) -> PyResult<(PyMatrix, PyMatrix)> {
        let env = env_from(&bindings, params);
        env.validate(&self.decls).py_err()?;
        let (a, b) = self.pair(var, structure_aware)?.eval(&env).py_err()?;
        Ok((a.into(), b.into()))
    }

    /// Central-difference check of the symbolic derivatives.
    #[pyo3(signature = (var, bindings, h = 1e-5, tol = 1e-6))]
    fn grad_check<'py>(
        &self,
        py: Python<'py>,
        var: &str,
        bindings: HashMap<String, PyRef<'_, PyMatrix>>,
        h: f64,
        tol: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let env = env_from(&bindings, None);
        env.validate(&self.decls).py_err()?;
        let cfg = FdConfig { h, scheme: FdScheme::Central, tolerance: tol };
        let r = grad_check(&self.expr, &env, var, &self.decls, &cfg);
        let d = PyDict::new(py);
        d.set_item("variable", r.variable)?;
        d.set_item("max_rel_err_dz", r.max_rel_err_dz)?;
        d.set_item("max_rel_err_dzconj", r.max_rel_err_dzconj)?;
        d.set_item("worst_entry", r.worst_entry)?;
        d.set_item("pass", r.pass)?;
        d.set_item("error", r.error)?;
        Ok(d)
    }

    fn __str__(&self) -> String {
        pretty_print(&self.expr)
    }

    fn __repr__(&self) -> String {
        format!("Expr({:?})", pretty_print(&self.expr))
    }
}

impl PyExpr {
    fn pair(&self, var: &str, structure_aware: bool) -> PyResult<wirtinger::WirtingerPair> {
        if structure_aware {
            return derive(&self.expr, var, &self.decls).py_err();
        }
        let n = self.decls.get(var).ok_or_else(|| to_py(Error::Undeclared(var.to_string())))?.n;
        derive_unstructured(&self.expr, var, n).py_err()
    }
}

/// Outcome of a solve.
#[pyclass(name = "SolveReport", module = "pywirtinger", frozen, get_all)]
pub struct PySolveReport {
    z_star: PyMatrix,
    multipliers: BTreeMap<String, f64>,
    grad_residual: f64,
    constraint_residuals: Vec<f64>,
    objective_value: f64,
    iterations: usize,
    converged: bool,
    method: String,
}

impl From<optimizer::SolveReport> for PySolveReport {
    fn from(r: optimizer::SolveReport) -> Self {
        let method = match r.method {
            optimizer::Method::ClosedForm => "closed_form",
            optimizer::Method::AugmentedLagrangian => "augmented_lagrangian",
        };
        Self {
            z_star: r.z_star.into(),
            multipliers: r.multipliers,
            grad_residual: r.grad_residual,
            constraint_residuals: r.constraint_residuals,
            objective_value: r.objective_value,
            iterations: r.iterations,
            converged: r.converged,
            method: method.into(),
        }
    }
}

#[pymethods]
impl PySolveReport {
    fn __repr__(&self) -> String {
        format!(
            "SolveReport(method={}, converged={}, iterations={}, grad_residual={:e})",
            self.method, self.converged, self.iterations, self.grad_residual
        )
    }
}

/// Equality-constrained problem over one matrix variable.
#[pyclass(name = "Problem", module = "pywirtinger", frozen)]
pub struct PyProblem {
    problem: optimizer::Problem,
    project_density: bool,
}

impl From<optimizer::Problem> for PyProblem {
    fn from(problem: optimizer::Problem) -> Self {
        Self { problem, project_density: false }
    }
}

#[pymethods]
impl PyProblem {
    #[staticmethod]
    fn purity(n: usize) -> PyResult<Self> {
        Ok(optimizer::Problem::purity(n).py_err()?.into())
    }

    #[staticmethod]
    fn max_entropy(d: usize) -> PyResult<Self> {
        Ok(optimizer::Problem::max_entropy(d).py_err()?.into())
    }

    #[staticmethod]
    fn gibbs(h: PyRef<'_, PyMatrix>, e: f64) -> PyResult<Self> {
        Ok(optimizer::Problem::gibbs(&h.inner, e).py_err()?.into())
    }

    #[staticmethod]
    #[pyo3(signature = (l, c = None, d = None))]
    fn frobenius_fit(l: PyRef<'_, PyMatrix>, c: Option<f64>, d: Option<f64>) -> PyResult<Self> {
        Ok(optimizer::Problem::frobenius_fit(&l.inner, c, d).py_err()?.into())
    }

    /// Parses problem-file text; `@path` constants resolve against `base_dir`.
    #[staticmethod]
    #[pyo3(signature = (text, base_dir = "."))]
    fn from_text(text: &str, base_dir: &str) -> PyResult<Self> {
        let f = optimizer::parse_problem(text, Path::new(base_dir)).py_err()?;
        Ok(Self { problem: f.problem, project_density: f.project_density })
    }

    #[getter]
    fn n(&self) -> usize {
        self.problem.n()
    }

    #[getter]
    fn direction(&self) -> &'static str {
        match self.problem.direction {
            Direction::Minimize => "minimize",
            Direction::Maximize => "maximize",
            Direction::StationaryOnly => "stationary",
        }
    }

    fn constraint_names(&self) -> Vec<String> {
        self.problem.constraints.iter().map(|c| c.name.clone()).collect()
    }

    /// Iterative solve (augmented Lagrangian, or damped Newton for
    /// stationary-only problems).
    #[pyo3(signature = (gtol = 1e-7, ctol = 1e-8, seed = 0, start = None))]
    fn solve(
        &self,
        py: Python<'_>,
        gtol: f64,
        ctol: f64,
        seed: u64,
        start: Option<PyRef<'_, PyMatrix>>,
    ) -> PyResult<PySolveReport> {
        let opts = SolveOptions {
            gtol,
            ctol,
            seed,
            start: start.map(|m| m.inner.clone()),
            project_density: self.project_density,
            ..Default::default()
        };
        let p = &self.problem;
        Ok(py.detach(|| optimizer::solve_stationary(p, &opts)).py_err()?.into())
    }

    /// `(|dL/dZ|_F, constraint residuals)` at `z` with the given multipliers.
    fn residuals(&self, z: PyRef<'_, PyMatrix>, multipliers: BTreeMap<String, f64>) -> PyResult<(f64, Vec<f64>)> {
        let g = optimizer::grad_residual(&self.problem, &z.inner, &multipliers).py_err()?;
        Ok((g, optimizer::constraint_residuals(&self.problem, &z.inner).py_err()?))
    }
}

#[pyfunction]
fn solve_purity_min(n: usize) -> PyResult<PySolveReport> {
    Ok(optimizer::solve_purity_min(n).py_err()?.into())
}

#[pyfunction]
fn solve_max_entropy(d: usize) -> PyResult<PySolveReport> {
    Ok(optimizer::solve_max_entropy(d).py_err()?.into())
}

#[pyfunction]
fn solve_gibbs(h: PyRef<'_, PyMatrix>, e: f64) -> PyResult<PySolveReport> {
    Ok(optimizer::solve_gibbs(&h.inner, e).py_err()?.into())
}

#[pyfunction]
#[pyo3(signature = (l, c = None, d = None))]
fn solve_frobenius_fit(l: PyRef<'_, PyMatrix>, c: Option<f64>, d: Option<f64>) -> PyResult<PySolveReport> {
    Ok(optimizer::solve_frobenius_fit(&l.inner, c, d).py_err()?.into())
}

#[pymodule]
fn pywirtinger(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<PyMatrix>()?;
    m.add_class::<PyExpr>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolveReport>()?;
    m.add_function(wrap_pyfunction!(solve_purity_min, m)?)?;
    m.add_function(wrap_pyfunction!(solve_max_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(solve_gibbs, m)?)?;
    m.add_function(wrap_pyfunction!(solve_frobenius_fit, m)?)?;
    m.add("WirtingerError", py.get_type::<WirtingerError>())?;
    m.add("ParseError", py.get_type::<ParseError>())?;
    m.add("InfeasibleError", py.get_type::<InfeasibleError>())?;
    Ok(())
}
