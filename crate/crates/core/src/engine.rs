//! Symbolic Wirtinger derivatives.
//!
//! `Z` and `Z*` are treated as independent symbols. For a scalar `f` the
//! engine walks the tree collecting the first-order differential in the form
//! `df = tr(C dZ) + tr(C' dZ*)`; since `tr(C dZ) = sum_ij C_ji dz_ij`, the
//! derivative matrices are `df/dZ = tp(C)` and `df/dZ* = tp(C')`.
//!
//! Products use cyclicity of the trace, `tr(C L dX R) = tr(R C L dX)`, and
//! analytic functions use `tr(C dF(X)) = tr(C F'(X) dX)`, which holds when
//! `C` commutes with `X` (checked syntactically: `C` must itself be a
//! function of `X`). Everything else reduces to these two rules.

use crate::error::{Error, Result};
use crate::eval::{eval_matrix, EvalEnv};
use crate::expr::{canonicalize_matrix, canonicalize_scalar, free_vars, Decls, MatrixExpr, ScalarExpr, StructureClass};
use crate::matrix::ComplexMatrix;

/// `(df/dZ, df/dZ*)` for one variable, with entry `(i, j)` of `df/dZ`
/// equal to `df/dz_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct WirtingerPair {
    pub d_dz: MatrixExpr,
    pub d_dzconj: MatrixExpr,
    pub variable: String,
    pub structure_applied: StructureClass,
}

impl WirtingerPair {
    /// Numeric values of both components.
    pub fn eval(&self, env: &EvalEnv) -> Result<(ComplexMatrix, ComplexMatrix)> {
        Ok((eval_matrix(&self.d_dz, env)?, eval_matrix(&self.d_dzconj, env)?))
    }
}

struct Collector<'a> {
    var: &'a str,
    g: Vec<MatrixExpr>,
    gc: Vec<MatrixExpr>,
}

fn mentions_matrix(m: &MatrixExpr, var: &str) -> bool {
    free_vars(m).contains_key(var)
}

fn mentions_scalar(s: &ScalarExpr, var: &str) -> bool {
    free_vars(s).contains_key(var)
}

fn scaled(s: ScalarExpr, m: MatrixExpr) -> MatrixExpr {
    if s.is_lit(1.0) {
        m
    } else {
        MatrixExpr::ScalarMul(Box::new(s), Box::new(m))
    }
}

fn product(v: &[MatrixExpr], n: usize) -> MatrixExpr {
    match v.len() {
        0 => MatrixExpr::Identity(n),
        1 => v[0].clone(),
        _ => MatrixExpr::MatMul(v.to_vec()),
    }
}

/// True when `c` is built only from `x`, scalars and the identity, so that
/// it commutes with `x`.
fn is_function_of(c: &MatrixExpr, x: &MatrixExpr) -> bool {
    if c == x {
        return true;
    }
    match c {
        MatrixExpr::Identity(_) | MatrixExpr::Zero(_) => true,
        MatrixExpr::ScalarMul(_, m) | MatrixExpr::MatPow(m, _) | MatrixExpr::Inverse(m) | MatrixExpr::Apply(_, m) => {
            is_function_of(m, x)
        }
        MatrixExpr::Add(v) | MatrixExpr::MatMul(v) => v.iter().all(|t| is_function_of(t, x)),
        _ => false,
    }
}

impl Collector<'_> {
    /// Accumulates `coef * df` for a scalar `f`.
    fn scalar(&mut self, f: &ScalarExpr, coef: ScalarExpr) -> Result<()> {
        if !mentions_scalar(f, self.var) {
            return Ok(());
        }
        match f {
            ScalarExpr::Lit(_) | ScalarExpr::Param(_) => {}
            ScalarExpr::Sum(v) => {
                for t in v {
                    self.scalar(t, coef.clone())?;
                }
            }
            ScalarExpr::Neg(x) => self.scalar(x, ScalarExpr::Product(vec![ScalarExpr::real(-1.0), coef]))?,
            ScalarExpr::Product(v) => {
                for i in 0..v.len() {
                    let mut others: Vec<ScalarExpr> = vec![coef.clone()];
                    others.extend(v.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, s)| s.clone()));
                    self.scalar(&v[i], ScalarExpr::Product(others))?;
                }
            }
            ScalarExpr::Trace(m) => self.matrix(m, scaled(coef, MatrixExpr::Identity(m.dim())))?,
            ScalarExpr::Det(m) => {
                if contains_apply(m) {
                    return Err(Error::Unsupported(format!("matrix function under det in `{f}`")));
                }
                let w = ScalarExpr::Product(vec![coef, f.clone()]);
                self.matrix(m, scaled(w, MatrixExpr::Inverse(m.clone())))?
            }
            ScalarExpr::Entry(m, i, j) => {
                let e = MatrixExpr::Const(ComplexMatrix::unit(m.dim(), *j, *i));
                self.matrix(m, scaled(coef, e))?
            }
            ScalarExpr::Bilinear { a, m, b, conj_left } => {
                // a'^T M b = tr(b a'^T M)
                let n = m.dim();
                let outer = ComplexMatrix::from_fn(n, |k, l| {
                    let al = if *conj_left { a[l].conj() } else { a[l] };
                    b[k] * al
                });
                self.matrix(m, scaled(coef, MatrixExpr::Const(outer)))?
            }
        }
        Ok(())
    }

    /// Accumulates `tr(C dX)`.
    fn matrix(&mut self, x: &MatrixExpr, c: MatrixExpr) -> Result<()> {
        if !mentions_matrix(x, self.var) {
            return Ok(());
        }
        let n = x.dim();
        match x {
            MatrixExpr::Var(..) => self.g.push(MatrixExpr::Transpose(Box::new(c))),
            MatrixExpr::VarConj(..) => self.gc.push(MatrixExpr::Transpose(Box::new(c))),
            MatrixExpr::Sym(..) | MatrixExpr::Const(_) | MatrixExpr::Identity(_) | MatrixExpr::Zero(_) => {}
            MatrixExpr::Add(v) => {
                for t in v {
                    self.matrix(t, c.clone())?;
                }
            }
            MatrixExpr::ScalarMul(s, m) => {
                let tr = ScalarExpr::Trace(Box::new(MatrixExpr::MatMul(vec![c.clone(), (**m).clone()])));
                self.scalar(s, tr)?;
                self.matrix(m, scaled((**s).clone(), c))?;
            }
            MatrixExpr::MatMul(v) => {
                for i in 0..v.len() {
                    let mut w = v[i + 1..].to_vec();
                    w.push(c.clone());
                    w.extend_from_slice(&v[..i]);
                    self.matrix(&v[i], product(&w, n))?;
                }
            }
            MatrixExpr::Hadamard(v) => {
                for i in 0..v.len() {
                    let others: Vec<MatrixExpr> =
                        v.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, m)| m.clone()).collect();
                    let rest = if others.len() == 1 { others[0].clone() } else { MatrixExpr::Hadamard(others) };
                    let w = MatrixExpr::Hadamard(vec![c.clone(), MatrixExpr::Transpose(Box::new(rest))]);
                    self.matrix(&v[i], w)?;
                }
            }
            MatrixExpr::Transpose(m) => self.matrix(m, MatrixExpr::Transpose(Box::new(c)))?,
            MatrixExpr::Conjugate(_) | MatrixExpr::Adjoint(_) => {
                let canon = canonicalize_matrix(x);
                if canon == *x {
                    return Err(Error::Unsupported(format!("conjugation over `{x}`")));
                }
                self.matrix(&canon, c)?
            }
            MatrixExpr::MatPow(m, k) => {
                let k = *k;
                let cc = canonicalize_matrix(&c);
                if is_function_of(&cc, m) {
                    let w = MatrixExpr::MatMul(vec![cc, MatrixExpr::MatPow(m.clone(), k - 1)]);
                    self.matrix(m, scaled(ScalarExpr::real(k as f64), w))?;
                } else {
                    for r in 0..k {
                        let w = MatrixExpr::MatMul(vec![
                            MatrixExpr::MatPow(m.clone(), k - 1 - r),
                            cc.clone(),
                            MatrixExpr::MatPow(m.clone(), r),
                        ]);
                        self.matrix(m, w)?;
                    }
                }
            }
            MatrixExpr::Inverse(m) => {
                let inv = MatrixExpr::Inverse(m.clone());
                let w = MatrixExpr::MatMul(vec![inv.clone(), c, inv]);
                self.matrix(m, scaled(ScalarExpr::real(-1.0), w))?;
            }
            MatrixExpr::Apply(f, m) => {
                let cc = canonicalize_matrix(&c);
                if !is_function_of(&cc, m) {
                    return Err(Error::Unsupported(format!(
                        "`{x}` appears in a product with factors that need not commute with its argument"
                    )));
                }
                self.matrix(m, MatrixExpr::MatMul(vec![cc, f.derivative(m)]))?;
            }
        }
        Ok(())
    }
}

fn contains_apply(m: &MatrixExpr) -> bool {
    match m {
        MatrixExpr::Apply(..) => true,
        MatrixExpr::Add(v) | MatrixExpr::MatMul(v) | MatrixExpr::Hadamard(v) => v.iter().any(contains_apply),
        MatrixExpr::ScalarMul(_, x)
        | MatrixExpr::Transpose(x)
        | MatrixExpr::Conjugate(x)
        | MatrixExpr::Adjoint(x)
        | MatrixExpr::MatPow(x, _)
        | MatrixExpr::Inverse(x) => contains_apply(x),
        _ => false,
    }
}

fn total(terms: Vec<MatrixExpr>, n: usize) -> MatrixExpr {
    if terms.is_empty() {
        MatrixExpr::Zero(n)
    } else {
        canonicalize_matrix(&MatrixExpr::Add(terms))
    }
}

/// Derivative pair of `f` treating `var` (an `n x n` matrix) as unstructured.
pub fn derive_unstructured(f: &ScalarExpr, var: &str, n: usize) -> Result<WirtingerPair> {
    let f = canonicalize_scalar(f);
    let mut c = Collector { var, g: Vec::new(), gc: Vec::new() };
    c.scalar(&f, ScalarExpr::real(1.0))?;
    Ok(WirtingerPair {
        d_dz: total(c.g, n),
        d_dzconj: total(c.gc, n),
        variable: var.to_string(),
        structure_applied: StructureClass::Unstructured,
    })
}

fn hd_identity(m: MatrixExpr) -> MatrixExpr {
    let n = m.dim();
    MatrixExpr::Hadamard(vec![MatrixExpr::Identity(n), m])
}

fn tp(m: &MatrixExpr) -> MatrixExpr {
    MatrixExpr::Transpose(Box::new(m.clone()))
}

fn sub(a: MatrixExpr, b: MatrixExpr) -> MatrixExpr {
    MatrixExpr::Add(vec![a, MatrixExpr::ScalarMul(Box::new(ScalarExpr::real(-1.0)), Box::new(b))])
}

/// Rewrites `tp(Z)` using the defining identity of the class, so results
/// read in terms of `Z` itself.
fn reinstate(m: &MatrixExpr, var: &str, s: StructureClass) -> MatrixExpr {
    let sign = match s {
        StructureClass::Symmetric | StructureClass::Diagonal => 1.0,
        StructureClass::AntiSymmetric => -1.0,
        _ => return m.clone(),
    };
    fn walk(m: &MatrixExpr, var: &str, sign: f64) -> MatrixExpr {
        let w = |x: &MatrixExpr| Box::new(walk(x, var, sign));
        match m {
            MatrixExpr::Transpose(x) => match &**x {
                MatrixExpr::Var(v, n) | MatrixExpr::VarConj(v, n) if v == var => {
                    let leaf = (**x).clone();
                    let _ = n;
                    if sign == 1.0 {
                        leaf
                    } else {
                        MatrixExpr::ScalarMul(Box::new(ScalarExpr::real(-1.0)), Box::new(leaf))
                    }
                }
                _ => MatrixExpr::Transpose(w(x)),
            },
            MatrixExpr::Add(v) => MatrixExpr::Add(v.iter().map(|x| walk(x, var, sign)).collect()),
            MatrixExpr::MatMul(v) => MatrixExpr::MatMul(v.iter().map(|x| walk(x, var, sign)).collect()),
            MatrixExpr::Hadamard(v) => MatrixExpr::Hadamard(v.iter().map(|x| walk(x, var, sign)).collect()),
            MatrixExpr::ScalarMul(s, x) => MatrixExpr::ScalarMul(Box::new(walk_s(s, var, sign)), w(x)),
            MatrixExpr::Conjugate(x) => MatrixExpr::Conjugate(w(x)),
            MatrixExpr::Adjoint(x) => MatrixExpr::Adjoint(w(x)),
            MatrixExpr::MatPow(x, k) => MatrixExpr::MatPow(w(x), *k),
            MatrixExpr::Inverse(x) => MatrixExpr::Inverse(w(x)),
            MatrixExpr::Apply(f, x) => MatrixExpr::Apply(f.clone(), w(x)),
            other => other.clone(),
        }
    }
    fn walk_s(s: &ScalarExpr, var: &str, sign: f64) -> ScalarExpr {
        let w = |x: &MatrixExpr| Box::new(walk(x, var, sign));
        match s {
            ScalarExpr::Trace(m) => ScalarExpr::Trace(w(m)),
            ScalarExpr::Det(m) => ScalarExpr::Det(w(m)),
            ScalarExpr::Entry(m, i, j) => ScalarExpr::Entry(w(m), *i, *j),
            ScalarExpr::Bilinear { a, m, b, conj_left } => {
                ScalarExpr::Bilinear { a: a.clone(), m: w(m), b: b.clone(), conj_left: *conj_left }
            }
            ScalarExpr::Sum(v) => ScalarExpr::Sum(v.iter().map(|x| walk_s(x, var, sign)).collect()),
            ScalarExpr::Product(v) => ScalarExpr::Product(v.iter().map(|x| walk_s(x, var, sign)).collect()),
            ScalarExpr::Neg(x) => ScalarExpr::Neg(Box::new(walk_s(x, var, sign))),
            other => other.clone(),
        }
    }
    canonicalize_matrix(&walk(m, var, sign))
}

/// Corrects an unstructured pair for a structured variable: the
/// unstructured derivatives `G = df/dZ~`, `Gc = df/dZ~*` are combined along
/// the class's dependent entries.
pub fn apply_structure(p: &WirtingerPair, s: StructureClass) -> WirtingerPair {
    let (g, gc) = (&p.d_dz, &p.d_dzconj);
    let (d, dc) = match s {
        StructureClass::Unstructured => (g.clone(), gc.clone()),
        StructureClass::Diagonal => (hd_identity(g.clone()), hd_identity(gc.clone())),
        StructureClass::Symmetric => (
            sub(MatrixExpr::Add(vec![g.clone(), tp(g)]), hd_identity(g.clone())),
            sub(MatrixExpr::Add(vec![gc.clone(), tp(gc)]), hd_identity(gc.clone())),
        ),
        StructureClass::AntiSymmetric => (sub(g.clone(), tp(g)), sub(gc.clone(), tp(gc))),
        StructureClass::Hermitian => (MatrixExpr::Add(vec![g.clone(), tp(gc)]), MatrixExpr::Add(vec![gc.clone(), tp(g)])),
        StructureClass::AntiHermitian => (sub(g.clone(), tp(gc)), sub(gc.clone(), tp(g))),
    };
    WirtingerPair {
        d_dz: reinstate(&canonicalize_matrix(&d), &p.variable, s),
        d_dzconj: reinstate(&canonicalize_matrix(&dc), &p.variable, s),
        variable: p.variable.clone(),
        structure_applied: s,
    }
}

/// Structure-corrected derivative pair with respect to a declared variable.
pub fn derive(f: &ScalarExpr, var: &str, decls: &Decls) -> Result<WirtingerPair> {
    let d = decls.get(var).ok_or_else(|| Error::Undeclared(var.to_string()))?;
    if d.constant {
        return Err(Error::Input(format!("`{var}` is declared constant")));
    }
    let p = derive_unstructured(f, var, d.n)?;
    Ok(apply_structure(&p, d.structure))
}

/// True when `df/dZ*` is identically zero, i.e. `f` is holomorphic in `var`.
pub fn holomorphy_test(f: &ScalarExpr, var: &str) -> Result<bool> {
    let Some(n) = var_dim(f, var) else { return Ok(true) };
    Ok(derive_unstructured(f, var, n)?.d_dzconj.is_zero())
}

/// Dimension of `var` as it occurs in `f`, if it occurs.
pub fn var_dim(f: &ScalarExpr, var: &str) -> Option<usize> {
    fn in_matrix(m: &MatrixExpr, var: &str) -> Option<usize> {
        match m {
            MatrixExpr::Var(v, n) | MatrixExpr::VarConj(v, n) if v == var => Some(*n),
            MatrixExpr::Add(v) | MatrixExpr::MatMul(v) | MatrixExpr::Hadamard(v) => v.iter().find_map(|x| in_matrix(x, var)),
            MatrixExpr::ScalarMul(s, x) => in_scalar(s, var).or_else(|| in_matrix(x, var)),
            MatrixExpr::Transpose(x)
            | MatrixExpr::Conjugate(x)
            | MatrixExpr::Adjoint(x)
            | MatrixExpr::MatPow(x, _)
            | MatrixExpr::Inverse(x)
            | MatrixExpr::Apply(_, x) => in_matrix(x, var),
            _ => None,
        }
    }
    fn in_scalar(s: &ScalarExpr, var: &str) -> Option<usize> {
        match s {
            ScalarExpr::Trace(m) | ScalarExpr::Det(m) | ScalarExpr::Entry(m, ..) => in_matrix(m, var),
            ScalarExpr::Bilinear { m, .. } => in_matrix(m, var),
            ScalarExpr::Sum(v) | ScalarExpr::Product(v) => v.iter().find_map(|x| in_scalar(x, var)),
            ScalarExpr::Neg(x) => in_scalar(x, var),
            _ => None,
        }
    }
    in_scalar(f, var)
}

/// `sum_{r=0}^{k-1} (Z^r D_ij Z^{k-1-r})_{lm}`: the derivative of `(Z^k)_{lm}`
/// with respect to `z_ij`, where `D_ij` is the unit matrix at `(i, j)`.
pub fn power_entry_derivative(z: &MatrixExpr, k: u32, l: usize, m: usize, i: usize, j: usize) -> Result<ScalarExpr> {
    let n = z.dim();
    if [l, m, i, j].iter().any(|&x| x >= n) {
        return Err(Error::Shape(format!("index outside a {n}x{n} matrix")));
    }
    if k == 0 {
        return Ok(ScalarExpr::real(0.0));
    }
    let unit = MatrixExpr::Const(ComplexMatrix::unit(n, i, j));
    let terms = (0..k)
        .map(|r| {
            MatrixExpr::MatMul(vec![MatrixExpr::MatPow(Box::new(z.clone()), r), unit.clone(), MatrixExpr::MatPow(Box::new(z.clone()), k - 1 - r)])
        })
        .collect();
    Ok(ScalarExpr::Entry(Box::new(MatrixExpr::Add(terms)), l, m))
}
