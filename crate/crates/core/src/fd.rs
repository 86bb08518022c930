//! Central-difference Wirtinger oracle.
//!
//! Entry `(i, j)` of the first output approximates
//! `1/2 (df/dx_ij - i df/dy_ij)`, the second `1/2 (df/dx_ij + i df/dy_ij)`.
//! For structured variables each probe moves `z_ij` together with the
//! entries tied to it (`z_ji` for the (anti-)symmetric and (anti-)Hermitian
//! classes), so the oracle measures the structured derivative directly and
//! never shares code with the symbolic corrections.

use serde::Serialize;

use crate::engine::derive;
use crate::error::{Error, Result};
use crate::eval::{eval_scalar, EvalEnv};
use crate::expr::{Decls, ScalarExpr, StructureClass};
use crate::matrix::ComplexMatrix;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FdScheme {
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdConfig {
    pub h: f64,
    pub scheme: FdScheme,
    /// Relative tolerance, with `max(1, |reference|)` as denominator.
    pub tolerance: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self { h: 1e-5, scheme: FdScheme::Central, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub variable: String,
    pub max_rel_err_dz: f64,
    pub max_rel_err_dzconj: f64,
    pub worst_entry: (usize, usize),
    pub pass: bool,
    /// Set when either side failed to evaluate.
    pub error: Option<String>,
}

/// How an entry moves under the class.
enum Freedom {
    /// Entry is identically zero.
    None,
    /// One real coordinate along `u`: `z_ij = t u`.
    Line(C64),
    /// Free complex entry, with the tied entry `z_ji` (if any) and the map
    /// from `dz_ij` to `dz_ji`.
    Full(Option<Tie>),
}

#[derive(Clone, Copy)]
enum Tie {
    Same,
    Negated,
    Conj,
    NegConj,
}

impl Tie {
    fn apply(self, d: C64) -> C64 {
        match self {
            Tie::Same => d,
            Tie::Negated => -d,
            Tie::Conj => d.conj(),
            Tie::NegConj => -d.conj(),
        }
    }
}

fn freedom(s: StructureClass, i: usize, j: usize) -> Freedom {
    use StructureClass::*;
    let one = C64::new(1.0, 0.0);
    match (s, i == j) {
        (Unstructured, _) => Freedom::Full(None),
        (Diagonal, true) => Freedom::Full(None),
        (Diagonal, false) => Freedom::None,
        (Symmetric, true) => Freedom::Full(None),
        (Symmetric, false) => Freedom::Full(Some(Tie::Same)),
        (AntiSymmetric, true) => Freedom::None,
        (AntiSymmetric, false) => Freedom::Full(Some(Tie::Negated)),
        (Hermitian, true) => Freedom::Line(one),
        (Hermitian, false) => Freedom::Full(Some(Tie::Conj)),
        (AntiHermitian, true) => Freedom::Line(C64::new(0.0, 1.0)),
        (AntiHermitian, false) => Freedom::Full(Some(Tie::NegConj)),
    }
}

/// Numeric `(df/dZ, df/dZ*)` by central differences in the independent
/// real coordinates of `structure`.
pub fn fd_wirtinger(
    f: &ScalarExpr,
    env: &EvalEnv,
    var: &str,
    structure: StructureClass,
    cfg: &FdConfig,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if !(cfg.h > 0.0 && cfg.tolerance > 0.0) {
        return Err(Error::Input("finite-difference step and tolerance must be positive".into()));
    }
    let z0 = env.bindings.get(var).ok_or_else(|| Error::Unbound { kind: "matrix", name: var.to_string() })?.clone();
    let n = z0.n();
    let mut probe_env = env.clone();
    let h = cfg.h;

    // Directional derivative of f along the perturbation `d` at (i, j).
    let mut slope = |i: usize, j: usize, d: C64, tie: Option<Tie>| -> Result<C64> {
        let mut vals = [C64::new(0.0, 0.0); 2];
        for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
            let mut z = z0.clone();
            z[(i, j)] += d * sign;
            if let Some(t) = tie {
                z[(j, i)] += t.apply(d * sign);
            }
            probe_env.bindings.insert(var.to_string(), z);
            vals[k] = eval_scalar(f, &probe_env)?;
        }
        let q = (vals[0] - vals[1]) / (2.0 * h);
        if !(q.re.is_finite() && q.im.is_finite()) {
            return Err(Error::NonFinite(format!("difference quotient at entry ({i}, {j})")));
        }
        Ok(q)
    };

    let mut first = ComplexMatrix::zeros(n);
    let mut second = ComplexMatrix::zeros(n);
    let half = C64::new(0.5, 0.0);
    let i_unit = C64::new(0.0, 1.0);
    for i in 0..n {
        for j in 0..n {
            match freedom(structure, i, j) {
                Freedom::None => {}
                Freedom::Line(u) => {
                    let dt = slope(i, j, u * h, None)?;
                    first[(i, j)] = u.conj() * dt;
                    second[(i, j)] = u * dt;
                }
                Freedom::Full(tie) => {
                    let dx = slope(i, j, C64::new(h, 0.0), tie)?;
                    let dy = slope(i, j, C64::new(0.0, h), tie)?;
                    first[(i, j)] = half * (dx - i_unit * dy);
                    second[(i, j)] = half * (dx + i_unit * dy);
                }
            }
        }
    }
    Ok((first, second))
}

fn rel_err(got: &ComplexMatrix, reference: &ComplexMatrix) -> (f64, (usize, usize)) {
    let n = got.n();
    let mut worst = (0.0, (0, 0));
    for i in 0..n {
        for j in 0..n {
            let r = reference[(i, j)];
            let e = (got[(i, j)] - r).norm() / r.norm().max(1.0);
            if e > worst.0 || e.is_nan() {
                worst = (e, (i, j));
            }
        }
    }
    worst
}

/// Compares the symbolic derivative of `f` against the oracle at `env`.
pub fn grad_check(f: &ScalarExpr, env: &EvalEnv, var: &str, decls: &Decls, cfg: &FdConfig) -> GradCheckReport {
    let failed = |e: Error| GradCheckReport {
        variable: var.to_string(),
        max_rel_err_dz: f64::INFINITY,
        max_rel_err_dzconj: f64::INFINITY,
        worst_entry: (0, 0),
        pass: false,
        error: Some(e.to_string()),
    };
    let run = || -> Result<GradCheckReport> {
        let structure = decls.get(var).ok_or_else(|| Error::Undeclared(var.to_string()))?.structure;
        let (s, sc) = derive(f, var, decls)?.eval(env)?;
        let (n, nc) = fd_wirtinger(f, env, var, structure, cfg)?;
        let (e, at) = rel_err(&s, &n);
        let (ec, atc) = rel_err(&sc, &nc);
        Ok(GradCheckReport {
            variable: var.to_string(),
            max_rel_err_dz: e,
            max_rel_err_dzconj: ec,
            worst_entry: if e >= ec { at } else { atc },
            pass: e <= cfg.tolerance && ec <= cfg.tolerance,
            error: None,
        })
    };
    run().unwrap_or_else(failed)
}

/// Numerical holomorphy verdict: the oracle's `df/dZ*` vanishes to within
/// `10 * tolerance` (max-abs). Evaluation failures count as `false`.
pub fn cauchy_riemann_check(f: &ScalarExpr, env: &EvalEnv, var: &str, cfg: &FdConfig) -> bool {
    match fd_wirtinger(f, env, var, StructureClass::Unstructured, cfg) {
        Ok((_, dc)) => dc.max_abs() <= 10.0 * cfg.tolerance,
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, VariableDecl};
    use crate::random::{random_complex, random_structured};

    fn decls(n: usize, s: StructureClass) -> Decls {
        Decls::new().with(VariableDecl::new("Z", n, s))
    }

    #[test]
    fn trace_is_identity() {
        let d = decls(3, StructureClass::Unstructured);
        let env = EvalEnv::new().bind("Z", random_complex(3, 1));
        let (a, b) = fd_wirtinger(&parse("tr(Z)", &d).unwrap(), &env, "Z", StructureClass::Unstructured, &FdConfig::default())
            .unwrap();
        assert!(a.sub(&ComplexMatrix::identity(3)).max_abs() <= 1e-9);
        assert!(b.max_abs() <= 1e-9);
    }

    #[test]
    fn stationary_circle() {
        // |z|^4 - |z|^2 at |z| = 1/sqrt(2)
        let d = decls(1, StructureClass::Unstructured);
        let f = parse("frob2(Z)*frob2(Z) - frob2(Z)", &d).unwrap();
        let z = ComplexMatrix::from_row_major(1, vec![C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0)]);
        let env = EvalEnv::new().bind("Z", z);
        let (a, b) = fd_wirtinger(&f, &env, "Z", StructureClass::Unstructured, &FdConfig::default()).unwrap();
        assert!(a.max_abs() < 1e-9 && b.max_abs() < 1e-9);
    }

    #[test]
    fn purity_gradient_is_twice_transpose() {
        let d = decls(3, StructureClass::Hermitian);
        let rho = random_structured(3, StructureClass::Hermitian, 4);
        let env = EvalEnv::new().bind("Z", rho.clone());
        let (a, b) = fd_wirtinger(&parse("tr(Z^2)", &d).unwrap(), &env, "Z", StructureClass::Hermitian, &FdConfig::default())
            .unwrap();
        assert!(a.sub(&rho.transpose().scale_re(2.0)).max_abs() < 1e-8);
        // real objective: second = conj(first); Hermitian: first_ij = second_ji
        assert!(b.sub(&a.conj()).max_abs() < 1e-8);
        assert!(a.sub(&b.transpose()).max_abs() < 1e-8);
    }

    #[test]
    fn cauchy_riemann_examples() {
        let d = decls(2, StructureClass::Unstructured);
        let env = EvalEnv::new().bind("Z", random_complex(2, 9));
        let cfg = FdConfig::default();
        assert!(cauchy_riemann_check(&parse("tr(Z^3)", &d).unwrap(), &env, "Z", &cfg));
        assert!(!cauchy_riemann_check(&parse("tr(adj(Z)*Z)", &d).unwrap(), &env, "Z", &cfg));
        assert!(!cauchy_riemann_check(&parse("tr(conj(Z))", &d).unwrap(), &env, "Z", &cfg));
    }

    #[test]
    fn quadratic_convergence() {
        let d = decls(2, StructureClass::Unstructured);
        // holomorphic polynomials are differenced exactly, so use a
        // non-holomorphic quartic: d/dZ (tr Z^dag Z)^2 = 2 tr(Z^dag Z) Z*
        let f = parse("frob2(Z)*frob2(Z)", &d).unwrap();
        let z = random_complex(2, 3);
        let env = EvalEnv::new().bind("Z", z.clone());
        let exact = z.conj().scale_re(2.0 * z.frobenius_norm().powi(2));
        let err = |h: f64| {
            let cfg = FdConfig { h, ..FdConfig::default() };
            fd_wirtinger(&f, &env, "Z", StructureClass::Unstructured, &cfg).unwrap().0.sub(&exact).max_abs()
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        let ratio = e1 / e2;
        assert!((3.0..=5.0).contains(&ratio), "{e1} -> {e2}");
    }
}
