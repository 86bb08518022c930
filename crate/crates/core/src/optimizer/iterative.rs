//! Augmented-Lagrangian solver.
//!
//! The outer loop updates multipliers `mu <- mu - rho h` and grows the
//! penalty when the constraint residual stalls. The inner problem is solved
//! by L-BFGS over the real coordinates of the variable's structure class;
//! the coordinate gradient is assembled from the symbolic `(dphi/dZ,
//! dphi/dZ*)` pair, which for real `phi` is the steepest-ascent direction
//! `conj(dphi/dZ)` restricted to the class.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector};

use crate::engine::{derive, derive_unstructured};
use crate::error::{Error, Result};
use crate::eval::{eval_matrix, eval_scalar, EvalEnv};
use crate::expr::{canonicalize_scalar, MatrixExpr, ScalarExpr, StructureClass};
use crate::matrix::ComplexMatrix;

use super::coords::Coords;
use super::{constraint_residuals, finish_report, Direction, Method, Problem, SolveOptions, SolveReport};

const PENALTY: &str = "penalty#";
const PENALTY_START: f64 = 10.0;
const PENALTY_GROWTH: f64 = 10.0;
const PENALTY_MAX: f64 = 1e8;
const MEMORY: usize = 10;

fn mu_name(k: usize) -> String {
    format!("mu#{k}")
}

/// Real scalar function with its unstructured Wirtinger pair.
struct Compiled {
    f: ScalarExpr,
    g: MatrixExpr,
    gc: MatrixExpr,
}

impl Compiled {
    fn new(f: ScalarExpr, var: &str, n: usize) -> Result<Self> {
        let f = canonicalize_scalar(&f);
        let pair = derive_unstructured(&f, var, n)?;
        Ok(Self { f, g: pair.d_dz, gc: pair.d_dzconj })
    }
}

struct Objective<'a> {
    compiled: &'a Compiled,
    problem: &'a Problem,
    coords: &'a Coords,
    params: BTreeMap<String, f64>,
}

impl Objective<'_> {
    fn env(&self, theta: &[f64]) -> EvalEnv {
        let mut env = self.problem.env(&self.coords.to_matrix(theta));
        env.params = self.params.clone();
        env
    }

    fn eval(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let env = self.env(theta);
        let v = eval_scalar(&self.compiled.f, &env)?.re;
        let g = eval_matrix(&self.compiled.g, &env)?;
        let gc = eval_matrix(&self.compiled.gc, &env)?;
        Ok((v, self.coords.gradient(&g, &gc)))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Limited-memory BFGS with Armijo backtracking. Trial points that fail to
/// evaluate (e.g. leave the domain of `log`) are treated as too long.
/// Returns the final point and the iteration count.
fn lbfgs(
    obj: &dyn Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    x0: Vec<f64>,
    max_iter: usize,
    stop: &dyn Fn(f64, &[f64]) -> bool,
    project: Option<&dyn Fn(&[f64]) -> Option<Vec<f64>>>,
) -> Result<(Vec<f64>, usize)> {
    let mut x = x0;
    let (mut f, mut g) = obj(&x)?;
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut failures = 0;
    for it in 0..max_iter {
        if stop(f, &g) {
            return Ok((x, it));
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut gd = dot(&g, &d);
        if gd >= 0.0 || !gd.is_finite() {
            hist.clear();
            d = g.iter().map(|v| -v).collect();
            gd = -dot(&g, &g);
        }
        let mut step = if hist.is_empty() { (1.0 / norm(&g)).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            if let Ok((fnew, gnew)) = obj(&xn) {
                let armijo = fnew <= f + 1e-4 * step * gd;
                // at the rounding floor of f, accept steps that reduce |grad|
                let flat = (fnew - f).abs() <= 1e-14 * f.abs().max(1.0) && norm(&gnew) < norm(&g);
                if fnew.is_finite() && (armijo || flat) {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((mut xn, mut fnew, mut gnew)) = accepted else {
            failures += 1;
            hist.clear();
            if failures >= 2 {
                return Ok((x, it));
            }
            continue;
        };
        failures = 0;
        if let Some(p) = project {
            if let Some(xp) = p(&xn) {
                if let Ok((fp, gp)) = obj(&xp) {
                    xn = xp;
                    fnew = fp;
                    gnew = gp;
                    hist.clear();
                }
            }
        }
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if hist.len() == MEMORY {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        f = fnew;
        g = gnew;
    }
    Ok((x, max_iter))
}

fn start_point(p: &Problem, opts: &SolveOptions) -> Result<ComplexMatrix> {
    let z = match &opts.start {
        Some(z) if z.n() != p.n() => {
            return Err(Error::Shape(format!("start point is {0}x{0}, variable is {1}x{1}", z.n(), p.n())))
        }
        Some(z) => z.clone(),
        None => p.sample_point(opts.seed),
    };
    Ok(z.project(p.variable.structure))
}

fn density_projection(coords: &Coords) -> impl Fn(&[f64]) -> Option<Vec<f64>> + '_ {
    move |theta: &[f64]| {
        let z = coords.to_matrix(theta);
        let (w, u) = z.hermitian_eigh().ok()?;
        if w[0] >= 0.0 {
            return None;
        }
        let clipped: Vec<f64> = w.iter().map(|x| x.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let d = ComplexMatrix::from_real_diag(&clipped.iter().map(|x| x / total).collect::<Vec<_>>());
        let rho = u.matmul(&d).matmul(&u.adjoint()).hermitian_part();
        Some(coords.from_matrix(&rho))
    }
}

/// Iterative stationary-point solver.
///
/// `Minimize` / `Maximize` run the augmented-Lagrangian loop on `f` / `-f`;
/// `StationaryOnly` runs damped Newton on `df/dZ = 0` and accepts any zero.
/// Non-convergence is reported through `converged = false`.
pub fn solve_stationary(p: &Problem, opts: &SolveOptions) -> Result<SolveReport> {
    if p.direction == Direction::StationaryOnly {
        return stationary_merit(p, opts);
    }
    let var = p.variable.name.as_str();
    let n = p.n();
    let coords = Coords::new(n, p.variable.structure);
    let mut theta = coords.from_matrix(&start_point(p, opts)?);
    let sign = if p.direction == Direction::Maximize { -1.0 } else { 1.0 };

    let mut terms = vec![ScalarExpr::Product(vec![ScalarExpr::real(sign), p.objective.clone()])];
    let mut squares = Vec::new();
    for (k, c) in p.constraints.iter().enumerate() {
        let h = ScalarExpr::Sum(vec![c.expr.clone(), ScalarExpr::real(-c.target)]);
        terms.push(ScalarExpr::Product(vec![ScalarExpr::real(-1.0), ScalarExpr::param(mu_name(k)), h.clone()]));
        squares.push(ScalarExpr::Product(vec![h.clone(), h]));
    }
    if !squares.is_empty() {
        terms.push(ScalarExpr::Product(vec![ScalarExpr::real(0.5), ScalarExpr::param(PENALTY), ScalarExpr::Sum(squares)]));
    }
    let compiled = Compiled::new(ScalarExpr::Sum(terms), var, n)?;

    let project_fn = density_projection(&coords);
    let project: Option<&dyn Fn(&[f64]) -> Option<Vec<f64>>> =
        (opts.project_density && p.variable.structure == StructureClass::Hermitian).then_some(&project_fn as _);

    let mut mu = vec![0.0; p.constraints.len()];
    let mut penalty = PENALTY_START;
    let mut prev_h = f64::INFINITY;
    let mut iterations = 0;
    let outer_rounds = if p.constraints.is_empty() { 1 } else { opts.max_outer };
    let inner_tol = 0.1 * opts.gtol;
    let mut report = None;
    for _ in 0..outer_rounds {
        let mut params: BTreeMap<String, f64> = mu.iter().enumerate().map(|(k, m)| (mu_name(k), *m)).collect();
        params.insert(PENALTY.into(), penalty);
        let objective = Objective { compiled: &compiled, problem: p, coords: &coords, params };
        let eval = |t: &[f64]| objective.eval(t);
        let stop = |_: f64, g: &[f64]| norm(g) <= inner_tol;
        let (t, it) = lbfgs(&eval, theta, opts.max_inner, &stop, project)?;
        theta = t;
        iterations += it;

        let z = coords.to_matrix(&theta);
        let h = constraint_residuals(p, &z)?;
        for (m, hk) in mu.iter_mut().zip(&h) {
            *m -= penalty * hk;
        }
        let multipliers = p.constraints.iter().zip(&mu).map(|(c, m)| (c.name.clone(), sign * m)).collect();
        let r = finish_report(p, z, multipliers, iterations, Method::AugmentedLagrangian, opts)?;
        if r.converged {
            return Ok(r);
        }
        report = Some(r);
        let hmax = h.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if hmax > 0.25 * prev_h {
            penalty = (penalty * PENALTY_GROWTH).min(PENALTY_MAX);
        }
        prev_h = hmax;
    }
    Ok(report.expect("at least one outer round"))
}

/// Damped Newton on `grad f = 0` in class coordinates, globalized by a
/// backtracking search on the merit `|grad f|^2`. The Jacobian is obtained
/// by central differences of the symbolic gradient.
fn stationary_merit(p: &Problem, opts: &SolveOptions) -> Result<SolveReport> {
    let var = p.variable.name.as_str();
    let n = p.n();
    // keep the structured derivative in the loop so unsupported objectives fail early
    derive(&p.objective, var, &p.decls()?)?;
    let compiled = Compiled::new(p.objective.clone(), var, n)?;
    let coords = Coords::new(n, p.variable.structure);
    let objective = Objective { compiled: &compiled, problem: p, coords: &coords, params: BTreeMap::new() };
    let grad = |t: &[f64]| objective.eval(t).map(|(_, g)| g);
    let mut theta = coords.from_matrix(&start_point(p, opts)?);
    let mut r = grad(&theta)?;
    let tol = 0.01 * opts.gtol;
    let mut iterations = 0;
    while iterations < opts.max_inner && norm(&r) > tol {
        iterations += 1;
        let k = theta.len();
        let mut jac = DMatrix::<f64>::zeros(k, k);
        for j in 0..k {
            let h = 1e-6 * theta[j].abs().max(1.0);
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let (gp, gm) = (grad(&tp)?, grad(&tm)?);
            for i in 0..k {
                jac[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        let rv = DVector::from_column_slice(&r);
        let newton = jac.clone().svd(true, true).solve(&(-&rv), 1e-12).ok();
        let merit = dot(&r, &r);
        // Newton first, then steepest descent on the merit
        let steepest = -(jac.transpose() * &rv);
        let mut moved = false;
        for d in newton.into_iter().chain(std::iter::once(steepest)) {
            let slope = 2.0 * (jac.transpose() * &rv).dot(&d);
            if !(slope < 0.0) {
                continue;
            }
            let mut step = 1.0;
            for _ in 0..60 {
                let tn: Vec<f64> = theta.iter().zip(d.iter()).map(|(a, b)| a + step * b).collect();
                if let Ok(rn) = grad(&tn) {
                    if dot(&rn, &rn) <= merit + 1e-4 * step * slope {
                        theta = tn;
                        r = rn;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if moved {
                break;
            }
        }
        if !moved {
            break;
        }
    }
    finish_report(p, coords.to_matrix(&theta), BTreeMap::new(), iterations, Method::AugmentedLagrangian, opts)
}
