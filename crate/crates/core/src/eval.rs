//! Numeric evaluation of expressions at bound points.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expr::{AnalyticFunction, Decls, MatrixExpr, ScalarExpr};
use crate::matrix::{ComplexMatrix, XLOGX_CLAMP};
use crate::C64;

/// Tolerance for checking bindings against their declared structure.
pub const STRUCTURE_TOL: f64 = 1e-12;

/// Relative tolerance under which a negative eigenvalue of a PSD argument to
/// `xlogx` is treated as round-off and clamped to zero.
const PSD_SLACK: f64 = 1e-10;

/// Values for the free symbols of an expression: matrices by name (both
/// variables and named constants) and real parameters.
#[derive(Debug, Clone, Default)]
pub struct EvalEnv {
    pub bindings: BTreeMap<String, ComplexMatrix>,
    pub params: BTreeMap<String, f64>,
}

impl EvalEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, name: impl Into<String>, m: ComplexMatrix) -> Self {
        self.bindings.insert(name.into(), m);
        self
    }

    pub fn param(mut self, name: impl Into<String>, v: f64) -> Self {
        self.params.insert(name.into(), v);
        self
    }

    /// Checks every declared symbol that is bound: dimension and structure.
    pub fn validate(&self, decls: &Decls) -> Result<()> {
        for d in decls.iter() {
            let Some(m) = self.bindings.get(&d.name) else { continue };
            if m.n() != d.n {
                return Err(Error::Shape(format!("`{}` is declared {}x{} but bound to {}x{}", d.name, d.n, d.n, m.n(), m.n())));
            }
            if !m.is_finite() {
                return Err(Error::NonFinite(format!("binding `{}`", d.name)));
            }
            if !m.in_class(d.structure, STRUCTURE_TOL) {
                return Err(Error::StructureViolation { name: d.name.clone(), structure: d.structure.to_string() });
            }
        }
        Ok(())
    }

    fn matrix(&self, name: &str, n: usize) -> Result<&ComplexMatrix> {
        let m = self.bindings.get(name).ok_or_else(|| Error::Unbound { kind: "matrix", name: name.to_string() })?;
        if m.n() != n {
            return Err(Error::Shape(format!("`{name}` is {n}x{n} in the expression but bound to {0}x{0}", m.n())));
        }
        Ok(m)
    }
}

pub fn eval_scalar(f: &ScalarExpr, env: &EvalEnv) -> Result<C64> {
    let v = scalar(f, env)?;
    if !(v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::NonFinite(format!("value of `{f}`")));
    }
    Ok(v)
}

pub fn eval_matrix(m: &MatrixExpr, env: &EvalEnv) -> Result<ComplexMatrix> {
    let v = matrix(m, env)?;
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("value of `{m}`")));
    }
    Ok(v)
}

/// `sum_ij a'_i M_ij b_j` with `a' = conj(a)` when `conj_left`.
pub fn bilinear_value(a: &[C64], m: &ComplexMatrix, b: &[C64], conj_left: bool) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (i, ai) in a.iter().enumerate() {
        let ai = if conj_left { ai.conj() } else { *ai };
        for (j, bj) in b.iter().enumerate() {
            acc += ai * m[(i, j)] * bj;
        }
    }
    acc
}

fn scalar(f: &ScalarExpr, env: &EvalEnv) -> Result<C64> {
    Ok(match f {
        ScalarExpr::Lit(z) => *z,
        ScalarExpr::Param(p) => {
            let v = env.params.get(p).ok_or_else(|| Error::Unbound { kind: "parameter", name: p.clone() })?;
            C64::new(*v, 0.0)
        }
        ScalarExpr::Trace(m) => matrix(m, env)?.trace(),
        ScalarExpr::Det(m) => matrix(m, env)?.det(),
        ScalarExpr::Entry(m, i, j) => {
            let v = matrix(m, env)?;
            if *i >= v.n() || *j >= v.n() {
                return Err(Error::Shape(format!("entry ({i}, {j}) outside a {0}x{0} matrix", v.n())));
            }
            v[(*i, *j)]
        }
        ScalarExpr::Bilinear { a, m, b, conj_left } => bilinear_value(a, &matrix(m, env)?, b, *conj_left),
        ScalarExpr::Sum(v) => v.iter().map(|t| scalar(t, env)).sum::<Result<C64>>()?,
        ScalarExpr::Product(v) => v.iter().map(|t| scalar(t, env)).product::<Result<C64>>()?,
        ScalarExpr::Neg(x) => -scalar(x, env)?,
    })
}

fn matrix(m: &MatrixExpr, env: &EvalEnv) -> Result<ComplexMatrix> {
    Ok(match m {
        MatrixExpr::Var(name, n) | MatrixExpr::Sym(name, n) => env.matrix(name, *n)?.clone(),
        MatrixExpr::VarConj(name, n) => env.matrix(name, *n)?.conj(),
        MatrixExpr::Const(c) => c.clone(),
        MatrixExpr::Identity(n) => ComplexMatrix::identity(*n),
        MatrixExpr::Zero(n) => ComplexMatrix::zeros(*n),
        MatrixExpr::Add(v) => {
            let mut acc = matrix(&v[0], env)?;
            for t in &v[1..] {
                acc = acc.add(&matrix(t, env)?);
            }
            acc
        }
        MatrixExpr::ScalarMul(s, x) => matrix(x, env)?.scale(scalar(s, env)?),
        MatrixExpr::MatMul(v) => {
            let mut acc = matrix(&v[0], env)?;
            for t in &v[1..] {
                acc = acc.matmul(&matrix(t, env)?);
            }
            acc
        }
        MatrixExpr::Hadamard(v) => {
            let mut acc = matrix(&v[0], env)?;
            for t in &v[1..] {
                acc = acc.hadamard(&matrix(t, env)?);
            }
            acc
        }
        MatrixExpr::Transpose(x) => matrix(x, env)?.transpose(),
        MatrixExpr::Conjugate(x) => matrix(x, env)?.conj(),
        MatrixExpr::Adjoint(x) => matrix(x, env)?.adjoint(),
        MatrixExpr::MatPow(x, k) => matrix(x, env)?.pow(*k as i64)?,
        MatrixExpr::Inverse(x) => matrix(x, env)?.inverse()?,
        MatrixExpr::Apply(f, x) => matrix_function(f, &matrix(x, env)?)?,
    })
}

fn hermitian_tol(m: &ComplexMatrix) -> bool {
    m.is_hermitian(STRUCTURE_TOL)
}

/// `F(M)`. Hermitian arguments go through the eigendecomposition; other
/// arguments use scaling and squaring (`exp`), exact polynomial evaluation
/// (`series`, powers) or the general eigendecomposition (`log`, `xlogx`).
pub fn matrix_function(f: &AnalyticFunction, m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let herm = hermitian_tol(m);
    match f {
        AnalyticFunction::Exp if herm => m.hermitian_function(|x| Ok(C64::new(x.exp(), 0.0))),
        AnalyticFunction::Exp => Ok(m.expm_series()),
        AnalyticFunction::Log if herm => m.hermitian_function(|x| {
            if x > 0.0 {
                Ok(C64::new(x.ln(), 0.0))
            } else {
                Err(Error::Domain(format!("log of a Hermitian matrix with eigenvalue {x:e}")))
            }
        }),
        AnalyticFunction::Log => m.general_function(|z| {
            if z.im == 0.0 && z.re <= 0.0 {
                Err(Error::Domain(format!("log of a matrix with eigenvalue {z} on the branch cut")))
            } else {
                Ok(z.ln())
            }
        }),
        AnalyticFunction::XLogX if herm => {
            let slack = PSD_SLACK * m.max_abs().max(1.0);
            m.hermitian_function(|x| {
                if x < -slack {
                    return Err(Error::Domain(format!("xlogx of a Hermitian matrix with eigenvalue {x:e}")));
                }
                let x = x.max(XLOGX_CLAMP);
                Ok(C64::new(x * x.ln(), 0.0))
            })
        }
        AnalyticFunction::XLogX => m.general_function(|z| {
            if z.norm() <= XLOGX_CLAMP {
                Ok(C64::new(0.0, 0.0))
            } else if z.im == 0.0 && z.re < 0.0 {
                Err(Error::Domain(format!("xlogx of a matrix with eigenvalue {z} on the branch cut")))
            } else {
                Ok(z * z.ln())
            }
        }),
        AnalyticFunction::Power(k) => m.pow(*k),
        AnalyticFunction::Series(c) => {
            // Horner: c_0 + M (c_1 + M (c_2 + ...))
            let n = m.n();
            let mut acc = ComplexMatrix::identity(n).scale(*c.last().unwrap_or(&C64::new(0.0, 0.0)));
            for ck in c.iter().rev().skip(1) {
                acc = m.matmul(&acc).add(&ComplexMatrix::identity(n).scale(*ck));
            }
            Ok(acc)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{canonicalize_scalar, parse, StructureClass, VariableDecl};

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol * b.norm().max(1.0)
    }

    #[test]
    fn spec_examples() {
        let d = Decls::new().with(VariableDecl::new("R", 2, StructureClass::Hermitian));
        let rho = ComplexMatrix::identity(2).scale_re(0.5);
        let env = EvalEnv::new().bind("R", rho);
        let tr_i = parse("tr(I)", &d).unwrap();
        assert_eq!(eval_scalar(&tr_i, &env).unwrap(), C64::new(2.0, 0.0));
        let purity = parse("tr(R^2)", &d).unwrap();
        assert!(close(eval_scalar(&purity, &env).unwrap(), C64::new(0.5, 0.0), 1e-15));
        let entropy = parse("-tr(xlogx(R))", &d).unwrap();
        assert!(close(eval_scalar(&entropy, &env).unwrap(), C64::new(2f64.ln(), 0.0), 1e-14));
    }

    #[test]
    fn matrix_function_examples() {
        let m = ComplexMatrix::from_real_diag(&[0.0, 2f64.ln()]);
        let e = matrix_function(&AnalyticFunction::Exp, &m).unwrap();
        assert!(e.sub(&ComplexMatrix::from_real_diag(&[1.0, 2.0])).max_abs() < 1e-14);
        let l = matrix_function(&AnalyticFunction::Log, &ComplexMatrix::identity(3)).unwrap();
        assert!(l.max_abs() < 1e-15);
        let zero = matrix_function(&AnalyticFunction::Exp, &ComplexMatrix::zeros(2)).unwrap();
        assert_eq!(zero, ComplexMatrix::identity(2));
        let pure = ComplexMatrix::from_real_diag(&[1.0, 0.0]);
        let h = matrix_function(&AnalyticFunction::XLogX, &pure).unwrap();
        assert!(h.max_abs() < 1e-290);
    }

    #[test]
    fn log_rejects_branch_cut() {
        let m = ComplexMatrix::from_real_diag(&[1.0, -1.0]);
        assert!(matches!(matrix_function(&AnalyticFunction::Log, &m), Err(Error::Domain(_))));
        let m = ComplexMatrix::from_real_diag(&[1.0, 0.0]);
        assert!(matches!(matrix_function(&AnalyticFunction::Log, &m), Err(Error::Domain(_))));
    }

    #[test]
    fn series_matches_polynomial() {
        let m = ComplexMatrix::from_fn(2, |i, j| C64::new((i + 2 * j) as f64, i as f64 - j as f64));
        let c = vec![C64::new(1.0, 0.0), C64::new(0.0, 2.0), C64::new(-0.5, 0.0)];
        let s = matrix_function(&AnalyticFunction::Series(c.clone()), &m).unwrap();
        let direct = ComplexMatrix::identity(2).scale(c[0]).add(&m.scale(c[1])).add(&m.matmul(&m).scale(c[2]));
        assert!(s.sub(&direct).max_abs() < 1e-13);
    }

    #[test]
    fn unbound_and_structure_errors() {
        let d = Decls::new().with(VariableDecl::new("R", 2, StructureClass::Hermitian));
        let f = parse("tr(R) + @lam", &d).unwrap();
        let env = EvalEnv::new().bind("R", ComplexMatrix::identity(2));
        assert!(matches!(eval_scalar(&f, &env), Err(Error::Unbound { kind: "parameter", .. })));
        let bad = ComplexMatrix::from_fn(2, |i, j| C64::new(0.0, (i + j) as f64));
        let env = EvalEnv::new().bind("R", bad);
        assert!(matches!(env.validate(&d), Err(Error::StructureViolation { .. })));
    }

    #[test]
    fn canonical_form_evaluates_the_same() {
        let d = Decls::new()
            .with(VariableDecl::new("Z", 3, StructureClass::Unstructured))
            .with(VariableDecl::constant("A", 3, StructureClass::Unstructured));
        let z = crate::random::random_complex(3, 11);
        let a = crate::random::random_complex(3, 12);
        let env = EvalEnv::new().bind("Z", z).bind("A", a);
        for text in ["tr(tp(A*Z)*adj(Z)) + 2*tr(Z) - tr(Z)", "det(Z^2*inv(Z))", "tr(conj(adj(Z))*A)"] {
            let f = parse(text, &d).unwrap();
            let v1 = eval_scalar(&f, &env).unwrap();
            let v2 = eval_scalar(&canonicalize_scalar(&f), &env).unwrap();
            assert!(close(v1, v2, 1e-13), "{text}: {v1} vs {v2}");
        }
    }
}
