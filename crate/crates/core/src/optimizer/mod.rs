//! Stationary points of real objectives under real equality constraints.
//!
//! The Lagrangian convention is `L = f - sum_k lam_k (g_k - c_k)`; a point
//! is stationary when the structure-corrected `dL/dZ` vanishes. Problems
//! are solved either iteratively ([`solve_stationary`]) or by the closed
//! forms of the density-operator and Frobenius-fit examples.

mod closed;
mod coords;
mod file;
mod iterative;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::engine::derive;
use crate::error::{Error, Result};
use crate::eval::{eval_matrix, eval_scalar, EvalEnv};
use crate::expr::{Decls, MatrixExpr, ScalarExpr, StructureClass, VariableDecl};
use crate::matrix::ComplexMatrix;
use crate::random::{random_density, random_structured};
use crate::C64;

pub use closed::{solve_frobenius_fit, solve_gibbs, solve_max_entropy, solve_purity_min};
pub use file::{parse_problem, ClosedFormHint, ProblemFile};
pub use iterative::solve_stationary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Minimize,
    Maximize,
    StationaryOnly,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "minimize" | "min" => Ok(Direction::Minimize),
            "maximize" | "max" => Ok(Direction::Maximize),
            "stationary" | "stationary_only" => Ok(Direction::StationaryOnly),
            _ => Err(Error::Input(format!("unknown direction `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    AugmentedLagrangian,
}

/// Equality constraint `expr = target` with its multiplier's name.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub expr: ScalarExpr,
    pub target: f64,
}

impl Constraint {
    pub fn new(name: impl Into<String>, expr: ScalarExpr, target: f64) -> Self {
        Self { name: name.into(), expr, target }
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub objective: ScalarExpr,
    pub variable: VariableDecl,
    pub constraints: Vec<Constraint>,
    pub direction: Direction,
    /// Values of named constants used by the expressions.
    pub constants: BTreeMap<String, ComplexMatrix>,
}

const REALNESS_TOL: f64 = 1e-9;

impl Problem {
    /// Builds and validates a problem: the expressions may only mention the
    /// variable and the given constants, and must be real-valued at random
    /// points of the variable's class.
    pub fn new(
        objective: ScalarExpr,
        variable: VariableDecl,
        constraints: Vec<Constraint>,
        direction: Direction,
        constants: BTreeMap<String, ComplexMatrix>,
    ) -> Result<Self> {
        if variable.constant {
            return Err(Error::InvalidProblem(format!("`{}` is declared constant", variable.name)));
        }
        let p = Self { objective, variable, constraints, direction, constants };
        let mut names: Vec<&str> = p.constraints.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidProblem("duplicate multiplier names".into()));
        }
        if p.direction == Direction::StationaryOnly && !p.constraints.is_empty() {
            return Err(Error::InvalidProblem("stationary-only problems take no constraints".into()));
        }
        p.decls()?;
        p.check_real()?;
        Ok(p)
    }

    pub fn decls(&self) -> Result<Decls> {
        let mut d = Decls::new();
        d.insert(self.variable.clone())?;
        for (name, m) in &self.constants {
            d.insert(VariableDecl::constant(name.clone(), m.n(), StructureClass::Unstructured))?;
        }
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.variable.n
    }

    pub(crate) fn env(&self, z: &ComplexMatrix) -> EvalEnv {
        let mut env = EvalEnv::new().bind(self.variable.name.clone(), z.clone());
        for (k, v) in &self.constants {
            env.bindings.insert(k.clone(), v.clone());
        }
        env
    }

    pub(crate) fn sample_point(&self, seed: u64) -> ComplexMatrix {
        match self.variable.structure {
            // densities are Hermitian and keep log/xlogx objectives defined
            StructureClass::Hermitian => random_density(self.n(), seed),
            s => random_structured(self.n(), s, seed),
        }
    }

    fn check_real(&self) -> Result<()> {
        let exprs = std::iter::once(("objective", &self.objective))
            .chain(self.constraints.iter().map(|c| (c.name.as_str(), &c.expr)));
        for (label, e) in exprs {
            let mut evaluated = 0;
            let mut last_err = None;
            for seed in 0..3u64 {
                let env = self.env(&self.sample_point(0x5eed + seed));
                match eval_scalar(e, &env) {
                    Ok(v) => {
                        evaluated += 1;
                        if v.im.abs() > REALNESS_TOL * v.norm().max(1.0) {
                            return Err(Error::InvalidProblem(format!("`{label}` is not real-valued: `{e}` = {v}")));
                        }
                    }
                    Err(err @ (Error::Unbound { .. } | Error::Shape(_))) => {
                        return Err(Error::InvalidProblem(format!("`{label}`: {err}")))
                    }
                    Err(err) => last_err = Some(err),
                }
            }
            if evaluated == 0 {
                let err = last_err.map(|e| e.to_string()).unwrap_or_default();
                return Err(Error::InvalidProblem(format!("`{label}` could not be evaluated at any sample point: {err}")));
            }
        }
        Ok(())
    }

    /// `min tr(R^2)` over density operators (`tr R = 1`).
    pub fn purity(n: usize) -> Result<Self> {
        let r = MatrixExpr::var("R", n);
        Self::new(
            r.clone().pow(2).trace(),
            VariableDecl::new("R", n, StructureClass::Hermitian),
            vec![Constraint::new("lam", r.trace(), 1.0)],
            Direction::Minimize,
            BTreeMap::new(),
        )
    }

    /// `max -tr(R log R)` over density operators.
    pub fn max_entropy(d: usize) -> Result<Self> {
        let r = MatrixExpr::var("R", d);
        Self::new(
            entropy(&r),
            VariableDecl::new("R", d, StructureClass::Hermitian),
            vec![Constraint::new("lam", r.trace(), 1.0)],
            Direction::Maximize,
            BTreeMap::new(),
        )
    }

    /// Maximum entropy at fixed energy `tr(R H) = E`.
    pub fn gibbs(h: &ComplexMatrix, e: f64) -> Result<Self> {
        let n = h.n();
        let r = MatrixExpr::var("R", n);
        let energy = (r.clone() * MatrixExpr::sym("H", n)).trace();
        Self::new(
            entropy(&r),
            VariableDecl::new("R", n, StructureClass::Hermitian),
            vec![Constraint::new("beta", energy, e), Constraint::new("eta", r.trace(), 1.0)],
            Direction::Maximize,
            BTreeMap::from([("H".to_string(), h.clone())]),
        )
    }

    /// `min |T - L|_F^2` subject to `|T|_F = C` and/or `tr T = D`. The trace
    /// constraint is split into real and imaginary parts so that every
    /// multiplier is real.
    pub fn frobenius_fit(l: &ComplexMatrix, c: Option<f64>, d: Option<f64>) -> Result<Self> {
        let n = l.n();
        let t = MatrixExpr::var("T", n);
        let diff = t.clone().try_sub(MatrixExpr::sym("L", n))?;
        let mut cons = Vec::new();
        if let Some(c) = c {
            cons.push(Constraint::new("lam", t.clone().frob2(), c * c));
        }
        if let Some(d) = d {
            let (tr, trc) = (t.clone().trace(), t.conj().trace());
            let re = ScalarExpr::Product(vec![ScalarExpr::real(0.5), tr.clone() + trc.clone()]);
            let im = ScalarExpr::Product(vec![ScalarExpr::lit(C64::new(0.0, -0.5)), tr - trc]);
            cons.push(Constraint::new("eta_re", re, d));
            cons.push(Constraint::new("eta_im", im, 0.0));
        }
        Self::new(
            diff.frob2(),
            VariableDecl::new("T", n, StructureClass::Unstructured),
            cons,
            Direction::Minimize,
            BTreeMap::from([("L".to_string(), l.clone())]),
        )
    }
}

fn entropy(r: &MatrixExpr) -> ScalarExpr {
    let log = r.clone().apply(crate::expr::AnalyticFunction::Log);
    -(r.clone() * log).trace()
}

/// `L = f - sum_k @name_k (g_k - c_k)`.
pub fn assemble_lagrangian(p: &Problem) -> ScalarExpr {
    if p.constraints.is_empty() {
        return p.objective.clone();
    }
    let mut terms = vec![p.objective.clone()];
    for c in &p.constraints {
        let h = ScalarExpr::Sum(vec![c.expr.clone(), ScalarExpr::Neg(Box::new(ScalarExpr::real(c.target)))]);
        terms.push(ScalarExpr::Neg(Box::new(ScalarExpr::Product(vec![ScalarExpr::param(c.name.clone()), h]))));
    }
    ScalarExpr::Sum(terms)
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub gtol: f64,
    pub ctol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub seed: u64,
    pub start: Option<ComplexMatrix>,
    /// Clip negative eigenvalues and renormalize the trace after each step.
    pub project_density: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { gtol: 1e-7, ctol: 1e-8, max_outer: 60, max_inner: 2000, seed: 0, start: None, project_density: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub z_star: ComplexMatrix,
    pub multipliers: BTreeMap<String, f64>,
    /// `|dL/dZ|_F` at the solution, structure-corrected.
    pub grad_residual: f64,
    /// `g_k(Z) - c_k`, in constraint order.
    pub constraint_residuals: Vec<f64>,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub method: Method,
}

/// Structure-corrected `dL/dZ` at `z` with the given multipliers.
pub fn lagrangian_gradient(p: &Problem, z: &ComplexMatrix, multipliers: &BTreeMap<String, f64>) -> Result<ComplexMatrix> {
    let l = assemble_lagrangian(p);
    let pair = derive(&l, &p.variable.name, &p.decls()?)?;
    let mut env = p.env(z);
    env.params = multipliers.clone();
    eval_matrix(&pair.d_dz, &env)
}

pub fn grad_residual(p: &Problem, z: &ComplexMatrix, multipliers: &BTreeMap<String, f64>) -> Result<f64> {
    Ok(lagrangian_gradient(p, z, multipliers)?.frobenius_norm())
}

pub fn constraint_residuals(p: &Problem, z: &ComplexMatrix) -> Result<Vec<f64>> {
    let env = p.env(z);
    p.constraints.iter().map(|c| Ok(eval_scalar(&c.expr, &env)?.re - c.target)).collect()
}

pub fn objective_value(p: &Problem, z: &ComplexMatrix) -> Result<f64> {
    Ok(eval_scalar(&p.objective, &p.env(z))?.re)
}

/// Assembles a report for a candidate solution, measuring every residual
/// through the symbolic engine.
pub(crate) fn finish_report(
    p: &Problem,
    z: ComplexMatrix,
    multipliers: BTreeMap<String, f64>,
    iterations: usize,
    method: Method,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let grad_residual = grad_residual(p, &z, &multipliers)?;
    let constraint_residuals = constraint_residuals(p, &z)?;
    let objective_value = objective_value(p, &z)?;
    let converged = grad_residual <= opts.gtol && constraint_residuals.iter().all(|r| r.abs() <= opts.ctol);
    Ok(SolveReport { z_star: z, multipliers, grad_residual, constraint_residuals, objective_value, iterations, converged, method })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::pretty_print;

    #[test]
    fn lagrangian_text() {
        let p = Problem::purity(2).unwrap();
        assert_eq!(pretty_print(&assemble_lagrangian(&p)), "tr(R^2) - @lam*(tr(R) - 1)");
        let p = Problem::max_entropy(2).unwrap();
        assert_eq!(pretty_print(&assemble_lagrangian(&p)), "-tr(R*log(R)) - @lam*(tr(R) - 1)");
        let h = ComplexMatrix::from_real_diag(&[0.0, 1.0]);
        let p = Problem::gibbs(&h, 0.5).unwrap();
        assert_eq!(
            pretty_print(&assemble_lagrangian(&p)),
            "-tr(R*log(R)) - @beta*(tr(R*H) - 0.5) - @eta*(tr(R) - 1)"
        );
    }

    #[test]
    fn rejects_complex_objective() {
        let z = MatrixExpr::var("Z", 2);
        let r = Problem::new(
            z.trace(),
            VariableDecl::new("Z", 2, StructureClass::Unstructured),
            vec![],
            Direction::Minimize,
            BTreeMap::new(),
        );
        assert!(matches!(r, Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn stationary_only_rejects_constraints() {
        let z = MatrixExpr::var("Z", 1);
        let r = Problem::new(
            z.clone().frob2(),
            VariableDecl::new("Z", 1, StructureClass::Unstructured),
            vec![Constraint::new("lam", z.frob2(), 1.0)],
            Direction::StationaryOnly,
            BTreeMap::new(),
        );
        assert!(matches!(r, Err(Error::InvalidProblem(_))));
    }
}
