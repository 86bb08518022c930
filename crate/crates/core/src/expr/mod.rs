//! Expression trees for scalar- and matrix-valued formulas over complex
//! square matrix variables.
//!
//! Trees are immutable values. Constructors that combine matrices check that
//! the dimensions agree, so a tree built through them never contains a shape
//! mismatch.

mod canon;
mod decl;
mod parse;
mod print;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::C64;

pub use canon::{canonicalize_matrix, canonicalize_scalar, node_order};
pub use decl::{Decls, VariableDecl};
pub use parse::{parse, parse_matrix};
pub use print::{format_complex, pretty_print, pretty_print_matrix};

/// Dependency pattern among the entries of a matrix variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureClass {
    Unstructured,
    Diagonal,
    Symmetric,
    AntiSymmetric,
    Hermitian,
    AntiHermitian,
}

impl StructureClass {
    pub const ALL: [StructureClass; 6] = [
        StructureClass::Unstructured,
        StructureClass::Diagonal,
        StructureClass::Symmetric,
        StructureClass::AntiSymmetric,
        StructureClass::Hermitian,
        StructureClass::AntiHermitian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StructureClass::Unstructured => "unstructured",
            StructureClass::Diagonal => "diagonal",
            StructureClass::Symmetric => "symmetric",
            StructureClass::AntiSymmetric => "antisymmetric",
            StructureClass::Hermitian => "hermitian",
            StructureClass::AntiHermitian => "antihermitian",
        }
    }
}

impl fmt::Display for StructureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StructureClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StructureClass::ALL
            .into_iter()
            .find(|c| c.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Input(format!("unknown structure class `{s}`")))
    }
}

/// Scalar analytic function lifted to matrices.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticFunction {
    Exp,
    /// Principal logarithm.
    Log,
    /// `z log z`, with `0 log 0 = 0`.
    XLogX,
    /// Integer power; negative exponents use the inverse.
    Power(i64),
    /// Finite power series `sum_k c_k z^k`.
    Series(Vec<C64>),
}

impl AnalyticFunction {
    /// `F(z)` with `F(z*) = conj(Fbar(z))`, i.e. the function obtained by
    /// conjugating the series coefficients.
    pub fn conj(&self) -> Self {
        match self {
            AnalyticFunction::Series(c) => AnalyticFunction::Series(c.iter().map(|z| z.conj()).collect()),
            other => other.clone(),
        }
    }

    /// Complex derivative `F'(M)` as a matrix expression in `m`.
    pub fn derivative(&self, m: &MatrixExpr) -> MatrixExpr {
        let n = m.dim();
        match self {
            AnalyticFunction::Exp => MatrixExpr::Apply(AnalyticFunction::Exp, Box::new(m.clone())),
            AnalyticFunction::Log => MatrixExpr::Inverse(Box::new(m.clone())),
            AnalyticFunction::XLogX => MatrixExpr::Add(vec![
                MatrixExpr::Identity(n),
                MatrixExpr::Apply(AnalyticFunction::Log, Box::new(m.clone())),
            ]),
            AnalyticFunction::Power(k) => MatrixExpr::ScalarMul(
                Box::new(ScalarExpr::real(*k as f64)),
                Box::new(MatrixExpr::Apply(AnalyticFunction::Power(k - 1), Box::new(m.clone()))),
            ),
            AnalyticFunction::Series(c) => {
                let d: Vec<C64> = c.iter().enumerate().skip(1).map(|(k, ck)| ck * k as f64).collect();
                if d.is_empty() {
                    MatrixExpr::Zero(n)
                } else {
                    MatrixExpr::Apply(AnalyticFunction::Series(d), Box::new(m.clone()))
                }
            }
        }
    }
}

/// Matrix-valued expression. Every node has a well-defined square dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixExpr {
    /// Matrix variable `Z`.
    Var(String, usize),
    /// Its elementwise conjugate `Z*`, an independent symbol for the engine.
    VarConj(String, usize),
    /// Named constant bound at evaluation time; never differentiated.
    Sym(String, usize),
    /// Literal matrix value.
    Const(ComplexMatrix),
    Identity(usize),
    /// Distinguished zero matrix.
    Zero(usize),
    Add(Vec<MatrixExpr>),
    ScalarMul(Box<ScalarExpr>, Box<MatrixExpr>),
    MatMul(Vec<MatrixExpr>),
    Hadamard(Vec<MatrixExpr>),
    Transpose(Box<MatrixExpr>),
    Conjugate(Box<MatrixExpr>),
    Adjoint(Box<MatrixExpr>),
    MatPow(Box<MatrixExpr>, u32),
    Inverse(Box<MatrixExpr>),
    Apply(AnalyticFunction, Box<MatrixExpr>),
}

/// Scalar-valued expression.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarExpr {
    Lit(C64),
    /// Real scalar parameter such as a Lagrange multiplier.
    Param(String),
    Trace(Box<MatrixExpr>),
    Det(Box<MatrixExpr>),
    /// Zero-based entry `(i, j)`.
    Entry(Box<MatrixExpr>, usize, usize),
    /// `a^T M b`, or `a^dag M b` when `conj_left` is set.
    Bilinear { a: Vec<C64>, m: Box<MatrixExpr>, b: Vec<C64>, conj_left: bool },
    Sum(Vec<ScalarExpr>),
    Product(Vec<ScalarExpr>),
    Neg(Box<ScalarExpr>),
}

fn same_dim(a: &MatrixExpr, b: &MatrixExpr, op: &str) -> Result<usize> {
    let (na, nb) = (a.dim(), b.dim());
    if na != nb {
        return Err(Error::Shape(format!("{op} of {na}x{na} and {nb}x{nb} matrices")));
    }
    Ok(na)
}

impl MatrixExpr {
    pub fn var(name: impl Into<String>, n: usize) -> Self {
        MatrixExpr::Var(name.into(), n)
    }

    pub fn sym(name: impl Into<String>, n: usize) -> Self {
        MatrixExpr::Sym(name.into(), n)
    }

    pub fn constant(m: ComplexMatrix) -> Self {
        MatrixExpr::Const(m)
    }

    /// Square dimension of the value this expression denotes.
    pub fn dim(&self) -> usize {
        match self {
            MatrixExpr::Var(_, n)
            | MatrixExpr::VarConj(_, n)
            | MatrixExpr::Sym(_, n)
            | MatrixExpr::Identity(n)
            | MatrixExpr::Zero(n) => *n,
            MatrixExpr::Const(m) => m.n(),
            MatrixExpr::Add(v) | MatrixExpr::MatMul(v) | MatrixExpr::Hadamard(v) => v[0].dim(),
            MatrixExpr::ScalarMul(_, m)
            | MatrixExpr::Transpose(m)
            | MatrixExpr::Conjugate(m)
            | MatrixExpr::Adjoint(m)
            | MatrixExpr::MatPow(m, _)
            | MatrixExpr::Inverse(m)
            | MatrixExpr::Apply(_, m) => m.dim(),
        }
    }

    pub fn try_add(self, other: MatrixExpr) -> Result<Self> {
        same_dim(&self, &other, "sum")?;
        Ok(MatrixExpr::Add(vec![self, other]))
    }

    pub fn try_sub(self, other: MatrixExpr) -> Result<Self> {
        same_dim(&self, &other, "difference")?;
        Ok(MatrixExpr::Add(vec![self, other.scale(ScalarExpr::real(-1.0))]))
    }

    pub fn try_matmul(self, other: MatrixExpr) -> Result<Self> {
        same_dim(&self, &other, "product")?;
        Ok(MatrixExpr::MatMul(vec![self, other]))
    }

    pub fn try_hadamard(self, other: MatrixExpr) -> Result<Self> {
        same_dim(&self, &other, "Hadamard product")?;
        Ok(MatrixExpr::Hadamard(vec![self, other]))
    }

    pub fn scale(self, s: ScalarExpr) -> Self {
        MatrixExpr::ScalarMul(Box::new(s), Box::new(self))
    }

    pub fn t(self) -> Self {
        MatrixExpr::Transpose(Box::new(self))
    }

    pub fn conj(self) -> Self {
        MatrixExpr::Conjugate(Box::new(self))
    }

    pub fn adj(self) -> Self {
        MatrixExpr::Adjoint(Box::new(self))
    }

    pub fn pow(self, k: u32) -> Self {
        MatrixExpr::MatPow(Box::new(self), k)
    }

    pub fn inv(self) -> Self {
        MatrixExpr::Inverse(Box::new(self))
    }

    pub fn apply(self, f: AnalyticFunction) -> Self {
        MatrixExpr::Apply(f, Box::new(self))
    }

    pub fn trace(self) -> ScalarExpr {
        ScalarExpr::Trace(Box::new(self))
    }

    pub fn det(self) -> ScalarExpr {
        ScalarExpr::Det(Box::new(self))
    }

    /// `tr(M^dag M)`, the squared Frobenius norm.
    pub fn frob2(self) -> ScalarExpr {
        MatrixExpr::MatMul(vec![self.clone().adj(), self]).trace()
    }

    pub fn entry(self, i: usize, j: usize) -> Result<ScalarExpr> {
        let n = self.dim();
        if i >= n || j >= n {
            return Err(Error::Shape(format!("entry ({i}, {j}) out of range for {n}x{n} matrix")));
        }
        Ok(ScalarExpr::Entry(Box::new(self), i, j))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, MatrixExpr::Zero(_))
    }
}

macro_rules! checked_op {
    ($trait:ident, $method:ident, $try:ident) => {
        /// Panics on a dimension mismatch; use the `try_` constructor to get
        /// an error instead.
        impl std::ops::$trait for MatrixExpr {
            type Output = MatrixExpr;
            fn $method(self, rhs: MatrixExpr) -> MatrixExpr {
                self.$try(rhs).expect("matrix dimension mismatch")
            }
        }
    };
}

checked_op!(Add, add, try_add);
checked_op!(Sub, sub, try_sub);
checked_op!(Mul, mul, try_matmul);

impl std::ops::Mul<MatrixExpr> for ScalarExpr {
    type Output = MatrixExpr;
    fn mul(self, rhs: MatrixExpr) -> MatrixExpr {
        rhs.scale(self)
    }
}

impl ScalarExpr {
    pub fn lit(z: C64) -> Self {
        ScalarExpr::Lit(z)
    }

    pub fn real(x: f64) -> Self {
        ScalarExpr::Lit(C64::new(x, 0.0))
    }

    pub fn param(name: impl Into<String>) -> Self {
        ScalarExpr::Param(name.into())
    }

    /// `a^T M b` (or `a^dag M b`). Vector lengths must match the matrix.
    pub fn bilinear(a: Vec<C64>, m: MatrixExpr, b: Vec<C64>, conj_left: bool) -> Result<Self> {
        let n = m.dim();
        if a.len() != n || b.len() != n {
            return Err(Error::Shape(format!(
                "bilinear form vectors of length {} and {} with {n}x{n} matrix",
                a.len(),
                b.len()
            )));
        }
        Ok(ScalarExpr::Bilinear { a, m: Box::new(m), b, conj_left })
    }

    pub fn as_lit(&self) -> Option<C64> {
        match self {
            ScalarExpr::Lit(z) => Some(*z),
            _ => None,
        }
    }

    pub fn is_lit(&self, v: f64) -> bool {
        matches!(self, ScalarExpr::Lit(z) if z.re == v && z.im == 0.0)
    }
}

impl std::ops::Add for ScalarExpr {
    type Output = ScalarExpr;
    fn add(self, rhs: ScalarExpr) -> ScalarExpr {
        ScalarExpr::Sum(vec![self, rhs])
    }
}

impl std::ops::Sub for ScalarExpr {
    type Output = ScalarExpr;
    fn sub(self, rhs: ScalarExpr) -> ScalarExpr {
        ScalarExpr::Sum(vec![self, ScalarExpr::Neg(Box::new(rhs))])
    }
}

impl std::ops::Mul for ScalarExpr {
    type Output = ScalarExpr;
    fn mul(self, rhs: ScalarExpr) -> ScalarExpr {
        ScalarExpr::Product(vec![self, rhs])
    }
}

impl std::ops::Neg for ScalarExpr {
    type Output = ScalarExpr;
    fn neg(self) -> ScalarExpr {
        ScalarExpr::Neg(Box::new(self))
    }
}

/// Occurrence report for one matrix variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Usage {
    pub uses_z: bool,
    pub uses_zconj: bool,
}

/// Either kind of expression, for operations that accept both.
#[derive(Debug, Clone, Copy)]
pub enum ExprRef<'a> {
    Scalar(&'a ScalarExpr),
    Matrix(&'a MatrixExpr),
}

impl<'a> From<&'a ScalarExpr> for ExprRef<'a> {
    fn from(e: &'a ScalarExpr) -> Self {
        ExprRef::Scalar(e)
    }
}

impl<'a> From<&'a MatrixExpr> for ExprRef<'a> {
    fn from(e: &'a MatrixExpr) -> Self {
        ExprRef::Matrix(e)
    }
}

/// Which variables occur as `Z` and which as `Z*`. Named constants are not
/// variables and are not reported.
pub fn free_vars<'a>(e: impl Into<ExprRef<'a>>) -> BTreeMap<String, Usage> {
    let mut out = BTreeMap::new();
    match e.into() {
        ExprRef::Scalar(s) => scalar_vars(s, false, &mut out),
        ExprRef::Matrix(m) => matrix_vars(m, false, &mut out),
    }
    out
}

fn mark(out: &mut BTreeMap<String, Usage>, name: &str, conj: bool) {
    let u = out.entry(name.to_string()).or_default();
    if conj {
        u.uses_zconj = true;
    } else {
        u.uses_z = true;
    }
}

fn matrix_vars(m: &MatrixExpr, conj: bool, out: &mut BTreeMap<String, Usage>) {
    match m {
        MatrixExpr::Var(name, _) => mark(out, name, conj),
        MatrixExpr::VarConj(name, _) => mark(out, name, !conj),
        MatrixExpr::Sym(..) | MatrixExpr::Const(_) | MatrixExpr::Identity(_) | MatrixExpr::Zero(_) => {}
        MatrixExpr::Add(v) | MatrixExpr::MatMul(v) | MatrixExpr::Hadamard(v) => {
            v.iter().for_each(|x| matrix_vars(x, conj, out))
        }
        MatrixExpr::ScalarMul(s, x) => {
            scalar_vars(s, conj, out);
            matrix_vars(x, conj, out);
        }
        MatrixExpr::Conjugate(x) | MatrixExpr::Adjoint(x) => matrix_vars(x, !conj, out),
        MatrixExpr::Transpose(x) | MatrixExpr::MatPow(x, _) | MatrixExpr::Inverse(x) | MatrixExpr::Apply(_, x) => {
            matrix_vars(x, conj, out)
        }
    }
}

fn scalar_vars(s: &ScalarExpr, conj: bool, out: &mut BTreeMap<String, Usage>) {
    match s {
        ScalarExpr::Lit(_) | ScalarExpr::Param(_) => {}
        ScalarExpr::Trace(m) | ScalarExpr::Det(m) | ScalarExpr::Entry(m, ..) => matrix_vars(m, conj, out),
        ScalarExpr::Bilinear { m, .. } => matrix_vars(m, conj, out),
        ScalarExpr::Sum(v) | ScalarExpr::Product(v) => v.iter().for_each(|x| scalar_vars(x, conj, out)),
        ScalarExpr::Neg(x) => scalar_vars(x, conj, out),
    }
}

/// Names of real scalar parameters occurring in `s`.
pub fn params(s: &ScalarExpr) -> Vec<String> {
    fn walk_s(s: &ScalarExpr, out: &mut Vec<String>) {
        match s {
            ScalarExpr::Param(p) => {
                if !out.contains(p) {
                    out.push(p.clone())
                }
            }
            ScalarExpr::Lit(_) => {}
            ScalarExpr::Trace(m) | ScalarExpr::Det(m) | ScalarExpr::Entry(m, ..) => walk_m(m, out),
            ScalarExpr::Bilinear { m, .. } => walk_m(m, out),
            ScalarExpr::Sum(v) | ScalarExpr::Product(v) => v.iter().for_each(|x| walk_s(x, out)),
            ScalarExpr::Neg(x) => walk_s(x, out),
        }
    }
    fn walk_m(m: &MatrixExpr, out: &mut Vec<String>) {
        match m {
            MatrixExpr::ScalarMul(s, x) => {
                walk_s(s, out);
                walk_m(x, out);
            }
            MatrixExpr::Add(v) | MatrixExpr::MatMul(v) | MatrixExpr::Hadamard(v) => v.iter().for_each(|x| walk_m(x, out)),
            MatrixExpr::Transpose(x)
            | MatrixExpr::Conjugate(x)
            | MatrixExpr::Adjoint(x)
            | MatrixExpr::MatPow(x, _)
            | MatrixExpr::Inverse(x)
            | MatrixExpr::Apply(_, x) => walk_m(x, out),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk_s(s, &mut out);
    out
}

/// Replaces every occurrence of variable `name` (and its conjugate) by a
/// literal matrix value.
pub fn substitute_var(m: &MatrixExpr, name: &str, value: &ComplexMatrix) -> MatrixExpr {
    map_matrix(m, &|leaf| match leaf {
        MatrixExpr::Var(v, _) if v == name => Some(MatrixExpr::Const(value.clone())),
        MatrixExpr::VarConj(v, _) if v == name => Some(MatrixExpr::Const(value.conj())),
        _ => None,
    }, &|_| None)
}

/// Replaces real parameters by literal values.
pub fn substitute_params(m: &MatrixExpr, values: &BTreeMap<String, f64>) -> MatrixExpr {
    map_matrix(m, &|_| None, &|p| values.get(p).map(|&v| ScalarExpr::real(v)))
}

/// Same as [`substitute_params`] for a scalar expression.
pub fn substitute_params_scalar(s: &ScalarExpr, values: &BTreeMap<String, f64>) -> ScalarExpr {
    map_scalar(s, &|_| None, &|p| values.get(p).map(|&v| ScalarExpr::real(v)))
}

type LeafFn<'a> = &'a dyn Fn(&MatrixExpr) -> Option<MatrixExpr>;
type ParamFn<'a> = &'a dyn Fn(&str) -> Option<ScalarExpr>;

fn map_matrix(m: &MatrixExpr, leaf: LeafFn, param: ParamFn) -> MatrixExpr {
    if let Some(r) = leaf(m) {
        return r;
    }
    let rec = |x: &MatrixExpr| Box::new(map_matrix(x, leaf, param));
    match m {
        MatrixExpr::Add(v) => MatrixExpr::Add(v.iter().map(|x| map_matrix(x, leaf, param)).collect()),
        MatrixExpr::MatMul(v) => MatrixExpr::MatMul(v.iter().map(|x| map_matrix(x, leaf, param)).collect()),
        MatrixExpr::Hadamard(v) => MatrixExpr::Hadamard(v.iter().map(|x| map_matrix(x, leaf, param)).collect()),
        MatrixExpr::ScalarMul(s, x) => MatrixExpr::ScalarMul(Box::new(map_scalar(s, leaf, param)), rec(x)),
        MatrixExpr::Transpose(x) => MatrixExpr::Transpose(rec(x)),
        MatrixExpr::Conjugate(x) => MatrixExpr::Conjugate(rec(x)),
        MatrixExpr::Adjoint(x) => MatrixExpr::Adjoint(rec(x)),
        MatrixExpr::MatPow(x, k) => MatrixExpr::MatPow(rec(x), *k),
        MatrixExpr::Inverse(x) => MatrixExpr::Inverse(rec(x)),
        MatrixExpr::Apply(f, x) => MatrixExpr::Apply(f.clone(), rec(x)),
        leafy => leafy.clone(),
    }
}

fn map_scalar(s: &ScalarExpr, leaf: LeafFn, param: ParamFn) -> ScalarExpr {
    match s {
        ScalarExpr::Param(p) => param(p).unwrap_or_else(|| s.clone()),
        ScalarExpr::Lit(_) => s.clone(),
        ScalarExpr::Trace(m) => ScalarExpr::Trace(Box::new(map_matrix(m, leaf, param))),
        ScalarExpr::Det(m) => ScalarExpr::Det(Box::new(map_matrix(m, leaf, param))),
        ScalarExpr::Entry(m, i, j) => ScalarExpr::Entry(Box::new(map_matrix(m, leaf, param)), *i, *j),
        ScalarExpr::Bilinear { a, m, b, conj_left } => ScalarExpr::Bilinear {
            a: a.clone(),
            m: Box::new(map_matrix(m, leaf, param)),
            b: b.clone(),
            conj_left: *conj_left,
        },
        ScalarExpr::Sum(v) => ScalarExpr::Sum(v.iter().map(|x| map_scalar(x, leaf, param)).collect()),
        ScalarExpr::Product(v) => ScalarExpr::Product(v.iter().map(|x| map_scalar(x, leaf, param)).collect()),
        ScalarExpr::Neg(x) => ScalarExpr::Neg(Box::new(map_scalar(x, leaf, param))),
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_print(self))
    }
}

impl fmt::Display for MatrixExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_print_matrix(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z() -> MatrixExpr {
        MatrixExpr::var("Z", 3)
    }

    fn a() -> MatrixExpr {
        MatrixExpr::sym("A", 3)
    }

    #[test]
    fn free_vars_tracks_conjugate_occurrences() {
        let f = z().pow(3).trace();
        let u = free_vars(&f);
        assert_eq!(u["Z"], Usage { uses_z: true, uses_zconj: false });

        let f = (a() * z().adj()).trace();
        let u = free_vars(&f);
        assert_eq!(u.len(), 1);
        assert_eq!(u["Z"], Usage { uses_z: false, uses_zconj: true });

        let f = (z() * a() * z().conj() * MatrixExpr::sym("B", 3)).trace();
        assert_eq!(free_vars(&f)["Z"], Usage { uses_z: true, uses_zconj: true });
    }

    #[test]
    fn conjugation_swaps_usage_flags() {
        let m = z() * a() * z().t();
        let base = free_vars(&m)["Z"];
        let swapped = free_vars(&m.clone().conj())["Z"];
        assert_eq!(swapped.uses_z, base.uses_zconj);
        assert_eq!(swapped.uses_zconj, base.uses_z);
    }

    #[test]
    fn constructors_reject_mismatched_shapes() {
        let err = z().try_matmul(MatrixExpr::var("W", 2)).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        assert!(z().try_add(MatrixExpr::Identity(4)).is_err());
        assert!(z().entry(3, 0).is_err());
        assert!(ScalarExpr::bilinear(vec![C64::new(1.0, 0.0)], z(), vec![C64::new(1.0, 0.0); 3], false).is_err());
    }

    #[test]
    fn structure_class_round_trips_through_name() {
        for c in StructureClass::ALL {
            assert_eq!(c.name().parse::<StructureClass>().unwrap(), c);
        }
        assert!("banded".parse::<StructureClass>().is_err());
    }
}
