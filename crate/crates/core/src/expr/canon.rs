//! Canonical form.
//!
//! Rules applied bottom-up:
//! - `adj(M)` becomes `tp(conj(M))`; conjugation is pushed down to the leaves
//!   (`conj(Z)` is the `VarConj` leaf) and transposition sits directly above
//!   leaves.
//! - products are flattened, scalar coefficients pulled out, identities
//!   dropped, adjacent powers of the same base merged (`Z*inv(Z)` cancels).
//! - sums are flattened, like terms collected, zero terms dropped and the
//!   result ordered by [`node_order`].
//! - subtrees with only literal leaves are folded numerically.
//! - the zero matrix is always the distinguished `Zero` node.

use std::cmp::Ordering;

use crate::eval::matrix_function;
use crate::matrix::ComplexMatrix;
use crate::C64;

use super::print::{pretty_print, pretty_print_matrix};
use super::{AnalyticFunction, MatrixExpr, ScalarExpr};

fn one() -> ScalarExpr {
    ScalarExpr::real(1.0)
}

fn matrix_rank(m: &MatrixExpr) -> u8 {
    match m {
        MatrixExpr::Zero(_) => 0,
        MatrixExpr::Identity(_) => 1,
        MatrixExpr::Const(_) => 2,
        MatrixExpr::Var(..) => 3,
        MatrixExpr::VarConj(..) => 4,
        MatrixExpr::Sym(..) => 5,
        MatrixExpr::Conjugate(_) => 6,
        MatrixExpr::Transpose(_) => 7,
        MatrixExpr::ScalarMul(..) => 8,
        MatrixExpr::MatMul(_) => 9,
        MatrixExpr::MatPow(..) => 10,
        MatrixExpr::Inverse(_) => 11,
        MatrixExpr::Hadamard(_) => 12,
        MatrixExpr::Apply(..) => 13,
        MatrixExpr::Add(_) => 14,
        MatrixExpr::Adjoint(_) => 15,
    }
}

fn scalar_rank(s: &ScalarExpr) -> u8 {
    match s {
        ScalarExpr::Lit(_) => 0,
        ScalarExpr::Param(_) => 1,
        ScalarExpr::Trace(_) => 2,
        ScalarExpr::Det(_) => 3,
        ScalarExpr::Entry(..) => 4,
        ScalarExpr::Bilinear { .. } => 5,
        ScalarExpr::Product(_) => 6,
        ScalarExpr::Sum(_) => 7,
        ScalarExpr::Neg(_) => 8,
    }
}

/// Deterministic ordering used to sort sums: node kind first, then the
/// rendered children.
pub fn node_order(a: &MatrixExpr, b: &MatrixExpr) -> Ordering {
    matrix_rank(a)
        .cmp(&matrix_rank(b))
        .then_with(|| pretty_print_matrix(a).cmp(&pretty_print_matrix(b)))
}

fn scalar_order(a: &ScalarExpr, b: &ScalarExpr) -> Ordering {
    scalar_rank(a).cmp(&scalar_rank(b)).then_with(|| pretty_print(a).cmp(&pretty_print(b)))
}

pub fn canonicalize_matrix(e: &MatrixExpr) -> MatrixExpr {
    canon_m(e)
}

pub fn canonicalize_scalar(e: &ScalarExpr) -> ScalarExpr {
    canon_s(e)
}

fn is_atom(m: &MatrixExpr) -> bool {
    match m {
        MatrixExpr::Var(..) | MatrixExpr::VarConj(..) | MatrixExpr::Sym(..) => true,
        MatrixExpr::Conjugate(x) => matches!(**x, MatrixExpr::Sym(..)),
        _ => false,
    }
}

fn is_terminal(m: &MatrixExpr) -> bool {
    is_atom(m)
        || matches!(m, MatrixExpr::Identity(_) | MatrixExpr::Zero(_))
        || matches!(m, MatrixExpr::Transpose(x) if is_atom(x))
}

fn canon_m(e: &MatrixExpr) -> MatrixExpr {
    match e {
        MatrixExpr::Var(..) | MatrixExpr::VarConj(..) | MatrixExpr::Sym(..) | MatrixExpr::Identity(_) | MatrixExpr::Zero(_) => {
            e.clone()
        }
        MatrixExpr::Const(m) => fold_const(m.clone()),
        MatrixExpr::Adjoint(x) => canon_m(&MatrixExpr::Transpose(Box::new(MatrixExpr::Conjugate(x.clone())))),
        MatrixExpr::Conjugate(x) => {
            if matches!(**x, MatrixExpr::Sym(..)) {
                return e.clone();
            }
            let pushed = conj_push(&canon_m(x));
            if is_terminal(&pushed) {
                pushed
            } else {
                canon_m(&pushed)
            }
        }
        MatrixExpr::Transpose(x) => {
            let pushed = tp_push(&canon_m(x));
            if is_terminal(&pushed) {
                pushed
            } else {
                canon_m(&pushed)
            }
        }
        MatrixExpr::Add(v) => canon_add(v.iter().map(canon_m).collect()),
        MatrixExpr::ScalarMul(s, x) => canon_scale(canon_s(s), canon_m(x)),
        MatrixExpr::MatMul(v) => canon_mul(v.iter().map(canon_m).collect()),
        MatrixExpr::Hadamard(v) => canon_hadamard(v.iter().map(canon_m).collect()),
        MatrixExpr::MatPow(x, k) => canon_pow(canon_m(x), *k),
        MatrixExpr::Inverse(x) => canon_inv(canon_m(x)),
        MatrixExpr::Apply(f, x) => canon_apply(f, canon_m(x)),
    }
}

fn fold_const(m: ComplexMatrix) -> MatrixExpr {
    if m.is_zero() {
        MatrixExpr::Zero(m.n())
    } else if m == ComplexMatrix::identity(m.n()) {
        MatrixExpr::Identity(m.n())
    } else {
        MatrixExpr::Const(m)
    }
}

fn const_value(m: &MatrixExpr) -> Option<ComplexMatrix> {
    match m {
        MatrixExpr::Const(v) => Some(v.clone()),
        MatrixExpr::Identity(n) => Some(ComplexMatrix::identity(*n)),
        MatrixExpr::Zero(n) => Some(ComplexMatrix::zeros(*n)),
        _ => None,
    }
}

pub(crate) fn conj_scalar(s: &ScalarExpr) -> ScalarExpr {
    match s {
        ScalarExpr::Lit(z) => ScalarExpr::Lit(z.conj()),
        ScalarExpr::Param(_) => s.clone(),
        ScalarExpr::Trace(m) => ScalarExpr::Trace(Box::new(conj_push(m))),
        ScalarExpr::Det(m) => ScalarExpr::Det(Box::new(conj_push(m))),
        ScalarExpr::Entry(m, i, j) => ScalarExpr::Entry(Box::new(conj_push(m)), *i, *j),
        ScalarExpr::Bilinear { a, m, b, conj_left } => ScalarExpr::Bilinear {
            a: a.clone(),
            m: Box::new(conj_push(m)),
            b: b.iter().map(|z| z.conj()).collect(),
            conj_left: !conj_left,
        },
        ScalarExpr::Sum(v) => ScalarExpr::Sum(v.iter().map(conj_scalar).collect()),
        ScalarExpr::Product(v) => ScalarExpr::Product(v.iter().map(conj_scalar).collect()),
        ScalarExpr::Neg(x) => ScalarExpr::Neg(Box::new(conj_scalar(x))),
    }
}

/// Elementwise conjugate pushed to the leaves.
fn conj_push(m: &MatrixExpr) -> MatrixExpr {
    let b = |x: &MatrixExpr| Box::new(conj_push(x));
    match m {
        MatrixExpr::Var(v, n) => MatrixExpr::VarConj(v.clone(), *n),
        MatrixExpr::VarConj(v, n) => MatrixExpr::Var(v.clone(), *n),
        MatrixExpr::Sym(..) => MatrixExpr::Conjugate(Box::new(m.clone())),
        MatrixExpr::Conjugate(x) => (**x).clone(),
        MatrixExpr::Const(c) => MatrixExpr::Const(c.conj()),
        MatrixExpr::Identity(_) | MatrixExpr::Zero(_) => m.clone(),
        MatrixExpr::Transpose(x) => MatrixExpr::Transpose(b(x)),
        MatrixExpr::Adjoint(x) => MatrixExpr::Adjoint(b(x)),
        MatrixExpr::Add(v) => MatrixExpr::Add(v.iter().map(conj_push).collect()),
        MatrixExpr::MatMul(v) => MatrixExpr::MatMul(v.iter().map(conj_push).collect()),
        MatrixExpr::Hadamard(v) => MatrixExpr::Hadamard(v.iter().map(conj_push).collect()),
        MatrixExpr::ScalarMul(s, x) => MatrixExpr::ScalarMul(Box::new(conj_scalar(s)), b(x)),
        MatrixExpr::MatPow(x, k) => MatrixExpr::MatPow(b(x), *k),
        MatrixExpr::Inverse(x) => MatrixExpr::Inverse(b(x)),
        MatrixExpr::Apply(f, x) => MatrixExpr::Apply(f.conj(), b(x)),
    }
}

/// Transpose pushed to the leaves.
fn tp_push(m: &MatrixExpr) -> MatrixExpr {
    let b = |x: &MatrixExpr| Box::new(tp_push(x));
    match m {
        MatrixExpr::Var(..) | MatrixExpr::VarConj(..) | MatrixExpr::Sym(..) | MatrixExpr::Conjugate(_) => {
            MatrixExpr::Transpose(Box::new(m.clone()))
        }
        MatrixExpr::Transpose(x) => (**x).clone(),
        MatrixExpr::Const(c) => MatrixExpr::Const(c.transpose()),
        MatrixExpr::Identity(_) | MatrixExpr::Zero(_) => m.clone(),
        MatrixExpr::Adjoint(x) => MatrixExpr::Conjugate(x.clone()),
        MatrixExpr::Add(v) => MatrixExpr::Add(v.iter().map(tp_push).collect()),
        MatrixExpr::MatMul(v) => MatrixExpr::MatMul(v.iter().rev().map(tp_push).collect()),
        MatrixExpr::Hadamard(v) => MatrixExpr::Hadamard(v.iter().map(tp_push).collect()),
        MatrixExpr::ScalarMul(s, x) => MatrixExpr::ScalarMul(s.clone(), b(x)),
        MatrixExpr::MatPow(x, k) => MatrixExpr::MatPow(b(x), *k),
        MatrixExpr::Inverse(x) => MatrixExpr::Inverse(b(x)),
        MatrixExpr::Apply(f, x) => MatrixExpr::Apply(f.clone(), b(x)),
    }
}

fn lit_of(s: &ScalarExpr) -> Option<C64> {
    s.as_lit()
}

fn s_mul(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr {
    canon_prod(vec![a, b])
}

fn s_add(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr {
    canon_sum(vec![a, b])
}

fn make_scaled(coef: ScalarExpr, term: MatrixExpr) -> MatrixExpr {
    if coef.is_lit(1.0) {
        return term;
    }
    if let (Some(c), MatrixExpr::Const(m)) = (lit_of(&coef), &term) {
        return fold_const(m.scale(c));
    }
    MatrixExpr::ScalarMul(Box::new(coef), Box::new(term))
}

fn canon_add(items: Vec<MatrixExpr>) -> MatrixExpr {
    let n = items[0].dim();
    let mut terms: Vec<(ScalarExpr, MatrixExpr)> = Vec::new();
    fn collect(item: MatrixExpr, terms: &mut Vec<(ScalarExpr, MatrixExpr)>) {
        match item {
            MatrixExpr::Add(v) => v.into_iter().for_each(|t| collect(t, terms)),
            MatrixExpr::Zero(_) => {}
            MatrixExpr::ScalarMul(s, t) => push_term(*s, *t, terms),
            other => push_term(one(), other, terms),
        }
    }
    fn push_term(c: ScalarExpr, t: MatrixExpr, terms: &mut Vec<(ScalarExpr, MatrixExpr)>) {
        if let Some(slot) = terms.iter_mut().find(|(_, u)| *u == t) {
            slot.0 = s_add(slot.0.clone(), c);
        } else {
            terms.push((c, t));
        }
    }
    for item in items {
        collect(item, &mut terms);
    }

    let numeric = |(c, t): &(ScalarExpr, MatrixExpr)| {
        lit_of(c).is_some() && matches!(t, MatrixExpr::Const(_) | MatrixExpr::Identity(_))
    };
    if terms.iter().any(|(c, t)| lit_of(c).is_some() && matches!(t, MatrixExpr::Const(_))) {
        let mut acc = ComplexMatrix::zeros(n);
        for (c, t) in terms.iter().filter(|x| numeric(x)) {
            acc = acc.add(&const_value(t).unwrap().scale(lit_of(c).unwrap()));
        }
        terms.retain(|x| !numeric(x));
        if !acc.is_zero() {
            push_term(one(), fold_const(acc), &mut terms);
        }
    }

    let mut terms: Vec<(ScalarExpr, MatrixExpr)> =
        terms.into_iter().filter(|(c, t)| !c.is_lit(0.0) && !t.is_zero()).collect();
    terms.sort_by(|(ca, ta), (cb, tb)| node_order(ta, tb).then_with(|| scalar_order(ca, cb)));
    let mut out: Vec<MatrixExpr> =
        terms.into_iter().map(|(c, t)| make_scaled(c, t)).filter(|m| !m.is_zero()).collect();
    match out.len() {
        0 => MatrixExpr::Zero(n),
        1 => out.pop().unwrap(),
        _ => MatrixExpr::Add(out),
    }
}

fn canon_scale(s: ScalarExpr, x: MatrixExpr) -> MatrixExpr {
    let n = x.dim();
    if s.is_lit(0.0) || x.is_zero() {
        return MatrixExpr::Zero(n);
    }
    match x {
        MatrixExpr::Add(v) => canon_add(v.into_iter().map(|t| canon_scale(s.clone(), t)).collect()),
        MatrixExpr::ScalarMul(t, y) => canon_scale(s_mul(s, *t), *y),
        other => make_scaled(s, other),
    }
}

fn base_exp(f: &MatrixExpr) -> (MatrixExpr, i64) {
    match f {
        MatrixExpr::MatPow(b, k) => match &**b {
            MatrixExpr::Inverse(inner) => ((**inner).clone(), -(*k as i64)),
            _ => ((**b).clone(), *k as i64),
        },
        MatrixExpr::Inverse(b) => ((**b).clone(), -1),
        other => (other.clone(), 1),
    }
}

fn make_power(base: MatrixExpr, e: i64) -> MatrixExpr {
    match e {
        0 => MatrixExpr::Identity(base.dim()),
        1 => base,
        -1 => MatrixExpr::Inverse(Box::new(base)),
        k if k > 1 => MatrixExpr::MatPow(Box::new(base), k as u32),
        k => MatrixExpr::MatPow(Box::new(MatrixExpr::Inverse(Box::new(base))), (-k) as u32),
    }
}

fn canon_mul(items: Vec<MatrixExpr>) -> MatrixExpr {
    let n = items[0].dim();
    let mut coef = one();
    let mut stack: Vec<MatrixExpr> = Vec::new();

    fn push_factor(stack: &mut Vec<MatrixExpr>, f: MatrixExpr) {
        if matches!(f, MatrixExpr::Identity(_)) {
            return;
        }
        let Some(top) = stack.last() else {
            stack.push(f);
            return;
        };
        if let (MatrixExpr::Const(a), MatrixExpr::Const(b)) = (top, &f) {
            let prod = a.matmul(b);
            stack.pop();
            push_factor(stack, fold_const(prod));
            return;
        }
        let (b1, e1) = base_exp(top);
        let (b2, e2) = base_exp(&f);
        if b1 == b2 {
            stack.pop();
            let e = e1 + e2;
            if e != 0 {
                push_factor(stack, make_power(b1, e));
            }
            return;
        }
        stack.push(f);
    }

    fn process(f: MatrixExpr, coef: &mut ScalarExpr, stack: &mut Vec<MatrixExpr>) -> bool {
        match f {
            MatrixExpr::Zero(_) => return false,
            MatrixExpr::Identity(_) => {}
            MatrixExpr::MatMul(v) => {
                for x in v {
                    if !process(x, coef, stack) {
                        return false;
                    }
                }
            }
            MatrixExpr::ScalarMul(s, y) => {
                *coef = s_mul(coef.clone(), *s);
                return process(*y, coef, stack);
            }
            other => push_factor(stack, other),
        }
        true
    }

    for item in items {
        if !process(item, &mut coef, &mut stack) {
            return MatrixExpr::Zero(n);
        }
    }
    if stack.iter().any(|f| f.is_zero()) {
        return MatrixExpr::Zero(n);
    }
    let product = match stack.len() {
        0 => MatrixExpr::Identity(n),
        1 => stack.pop().unwrap(),
        _ => MatrixExpr::MatMul(stack),
    };
    canon_scale(coef, product)
}

fn canon_pow(x: MatrixExpr, k: u32) -> MatrixExpr {
    let n = x.dim();
    match (k, x) {
        (0, _) => MatrixExpr::Identity(n),
        (1, x) => x,
        (_, MatrixExpr::Identity(_)) => MatrixExpr::Identity(n),
        (_, MatrixExpr::Zero(_)) => MatrixExpr::Zero(n),
        (k, MatrixExpr::Const(m)) => match m.pow(k as i64) {
            Ok(p) => fold_const(p),
            Err(_) => MatrixExpr::MatPow(Box::new(MatrixExpr::Const(m)), k),
        },
        (k, MatrixExpr::MatPow(b, j)) => MatrixExpr::MatPow(b, j * k),
        (k, MatrixExpr::ScalarMul(s, y)) => {
            let coef = canon_prod(std::iter::repeat_n(*s, k as usize).collect());
            canon_scale(coef, canon_pow(*y, k))
        }
        (k, x) => MatrixExpr::MatPow(Box::new(x), k),
    }
}

fn canon_inv(x: MatrixExpr) -> MatrixExpr {
    match x {
        MatrixExpr::Identity(n) => MatrixExpr::Identity(n),
        MatrixExpr::Inverse(y) => *y,
        MatrixExpr::MatPow(b, k) => match *b {
            MatrixExpr::Inverse(inner) => make_power(*inner, k as i64),
            other => make_power(other, -(k as i64)),
        },
        MatrixExpr::Const(m) => match m.inverse() {
            Ok(inv) => fold_const(inv),
            Err(_) => MatrixExpr::Inverse(Box::new(MatrixExpr::Const(m))),
        },
        MatrixExpr::ScalarMul(s, y) => match lit_of(&s) {
            Some(c) if c.norm() > 0.0 => canon_scale(ScalarExpr::Lit(c.inv()), canon_inv(*y)),
            _ => MatrixExpr::Inverse(Box::new(MatrixExpr::ScalarMul(s, y))),
        },
        MatrixExpr::MatMul(v) => canon_mul(v.into_iter().rev().map(canon_inv).collect()),
        other => MatrixExpr::Inverse(Box::new(other)),
    }
}

fn canon_hadamard(items: Vec<MatrixExpr>) -> MatrixExpr {
    let n = items[0].dim();
    let mut coef = one();
    let mut factors: Vec<MatrixExpr> = Vec::new();
    let mut konst: Option<ComplexMatrix> = None;
    let mut has_identity = false;
    let mut pending = items;
    while let Some(f) = pending.pop() {
        match f {
            MatrixExpr::Zero(_) => return MatrixExpr::Zero(n),
            MatrixExpr::Hadamard(v) => pending.extend(v),
            MatrixExpr::ScalarMul(s, y) => {
                coef = s_mul(coef, *s);
                pending.push(*y);
            }
            MatrixExpr::Identity(_) => has_identity = true,
            MatrixExpr::Const(m) => konst = Some(konst.map_or(m.clone(), |k| k.hadamard(&m))),
            other => factors.push(other),
        }
    }
    if let Some(k) = konst.as_mut() {
        if has_identity {
            *k = k.hadamard(&ComplexMatrix::identity(n));
            has_identity = false;
        }
        if k.is_zero() {
            return MatrixExpr::Zero(n);
        }
    }
    if has_identity {
        // only the diagonal survives, and transposition does not move it
        for f in factors.iter_mut() {
            if let MatrixExpr::Transpose(x) = f {
                *f = (**x).clone();
            }
        }
        factors.push(MatrixExpr::Identity(n));
    }
    if let Some(k) = konst {
        factors.push(fold_const(k));
    }
    factors.sort_by(node_order);
    let product = match factors.len() {
        0 => MatrixExpr::Identity(n),
        1 => factors.pop().unwrap(),
        _ => MatrixExpr::Hadamard(factors),
    };
    canon_scale(coef, product)
}

fn canon_apply(f: &AnalyticFunction, x: MatrixExpr) -> MatrixExpr {
    let n = x.dim();
    let f = match f {
        AnalyticFunction::Power(k) if *k >= 0 => return canon_pow(x, *k as u32),
        AnalyticFunction::Power(k) => return canon_pow(canon_inv(x), k.unsigned_abs() as u32),
        AnalyticFunction::Series(c) => {
            let mut c = c.clone();
            while c.last().is_some_and(|z| z.norm() == 0.0) {
                c.pop();
            }
            match c.len() {
                0 => return MatrixExpr::Zero(n),
                1 => return canon_scale(ScalarExpr::Lit(c[0]), MatrixExpr::Identity(n)),
                _ => AnalyticFunction::Series(c),
            }
        }
        other => other.clone(),
    };
    if let Some(value) = const_value(&x) {
        if let Ok(r) = matrix_function(&f, &value) {
            if r.is_finite() {
                return fold_const(r);
            }
        }
    }
    MatrixExpr::Apply(f, Box::new(x))
}

fn canon_s(e: &ScalarExpr) -> ScalarExpr {
    match e {
        ScalarExpr::Lit(_) | ScalarExpr::Param(_) => e.clone(),
        ScalarExpr::Neg(x) => canon_prod(vec![ScalarExpr::real(-1.0), canon_s(x)]),
        ScalarExpr::Sum(v) => canon_sum(v.iter().map(canon_s).collect()),
        ScalarExpr::Product(v) => canon_prod(v.iter().map(canon_s).collect()),
        ScalarExpr::Trace(m) => canon_trace(canon_m(m)),
        ScalarExpr::Det(m) => {
            let m = canon_m(m);
            match const_value(&m) {
                Some(v) => ScalarExpr::Lit(v.det()),
                None => ScalarExpr::Det(Box::new(m)),
            }
        }
        ScalarExpr::Entry(m, i, j) => match canon_m(m) {
            MatrixExpr::ScalarMul(s, y) => canon_prod(vec![*s, canon_s(&ScalarExpr::Entry(y, *i, *j))]),
            m => match const_value(&m) {
                Some(v) => ScalarExpr::Lit(v[(*i, *j)]),
                None => ScalarExpr::Entry(Box::new(m), *i, *j),
            },
        },
        ScalarExpr::Bilinear { a, m, b, conj_left } => {
            let m = canon_m(m);
            let rebuild = |m: MatrixExpr| ScalarExpr::Bilinear { a: a.clone(), m: Box::new(m), b: b.clone(), conj_left: *conj_left };
            match m {
                MatrixExpr::ScalarMul(s, y) => canon_prod(vec![*s, rebuild(*y)]),
                m => match const_value(&m) {
                    Some(v) => ScalarExpr::Lit(crate::eval::bilinear_value(a, &v, b, *conj_left)),
                    None => rebuild(m),
                },
            }
        }
    }
}

/// Splits a literal coefficient off a canonical product.
fn split_coef(s: ScalarExpr) -> (C64, Option<ScalarExpr>) {
    match s {
        ScalarExpr::Lit(z) => (z, None),
        ScalarExpr::Product(mut v) => match v.first() {
            Some(ScalarExpr::Lit(z)) => {
                let z = *z;
                v.remove(0);
                let rest = if v.len() == 1 { v.pop().unwrap() } else { ScalarExpr::Product(v) };
                (z, Some(rest))
            }
            _ => (C64::new(1.0, 0.0), Some(ScalarExpr::Product(v))),
        },
        other => (C64::new(1.0, 0.0), Some(other)),
    }
}

fn with_coef(c: C64, rest: ScalarExpr) -> ScalarExpr {
    if c == C64::new(1.0, 0.0) {
        return rest;
    }
    match rest {
        ScalarExpr::Product(mut v) => {
            v.insert(0, ScalarExpr::Lit(c));
            ScalarExpr::Product(v)
        }
        other => ScalarExpr::Product(vec![ScalarExpr::Lit(c), other]),
    }
}

fn canon_sum(items: Vec<ScalarExpr>) -> ScalarExpr {
    let mut constant = C64::new(0.0, 0.0);
    let mut terms: Vec<(C64, ScalarExpr)> = Vec::new();
    let mut pending = items;
    pending.reverse();
    while let Some(item) = pending.pop() {
        if let ScalarExpr::Sum(v) = item {
            pending.extend(v.into_iter().rev());
            continue;
        }
        match split_coef(item) {
            (c, None) => constant += c,
            (c, Some(rest)) => {
                if let Some(slot) = terms.iter_mut().find(|(_, r)| *r == rest) {
                    slot.0 += c;
                } else {
                    terms.push((c, rest));
                }
            }
        }
    }
    terms.retain(|(c, _)| c.norm() != 0.0);
    terms.sort_by(|(_, a), (_, b)| scalar_order(a, b));
    let mut out: Vec<ScalarExpr> = terms.into_iter().map(|(c, r)| with_coef(c, r)).collect();
    if constant.norm() != 0.0 {
        out.push(ScalarExpr::Lit(constant));
    }
    match out.len() {
        0 => ScalarExpr::real(0.0),
        1 => out.pop().unwrap(),
        _ => ScalarExpr::Sum(out),
    }
}

fn canon_prod(items: Vec<ScalarExpr>) -> ScalarExpr {
    let mut lit = C64::new(1.0, 0.0);
    let mut factors = Vec::new();
    let mut pending = items;
    while let Some(item) = pending.pop() {
        match item {
            ScalarExpr::Product(v) => pending.extend(v),
            ScalarExpr::Lit(z) => lit *= z,
            other => factors.push(other),
        }
    }
    if lit.norm() == 0.0 {
        return ScalarExpr::real(0.0);
    }
    if factors.is_empty() {
        return ScalarExpr::Lit(lit);
    }
    if factors.len() == 1 {
        if let ScalarExpr::Sum(v) = &factors[0] {
            if lit != C64::new(1.0, 0.0) {
                let scaled = v.iter().map(|t| canon_prod(vec![ScalarExpr::Lit(lit), t.clone()])).collect();
                return canon_sum(scaled);
            }
        }
    }
    factors.sort_by(scalar_order);
    if lit != C64::new(1.0, 0.0) {
        factors.insert(0, ScalarExpr::Lit(lit));
    }
    if factors.len() == 1 {
        factors.pop().unwrap()
    } else {
        ScalarExpr::Product(factors)
    }
}

fn rotation_order(a: &[MatrixExpr], b: &[MatrixExpr]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = node_order(x, y);
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

fn canon_trace(m: MatrixExpr) -> ScalarExpr {
    match m {
        MatrixExpr::Zero(_) => ScalarExpr::real(0.0),
        MatrixExpr::Identity(n) => ScalarExpr::real(n as f64),
        MatrixExpr::Const(v) => ScalarExpr::Lit(v.trace()),
        MatrixExpr::Add(v) => canon_sum(v.into_iter().map(canon_trace).collect()),
        MatrixExpr::ScalarMul(s, y) => canon_prod(vec![*s, canon_trace(*y)]),
        MatrixExpr::Transpose(x) if is_atom(&x) => ScalarExpr::Trace(x),
        MatrixExpr::Hadamard(v) if v.iter().any(|f| matches!(f, MatrixExpr::Identity(_))) => {
            let rest: Vec<MatrixExpr> = v.into_iter().filter(|f| !matches!(f, MatrixExpr::Identity(_))).collect();
            canon_trace(canon_hadamard(rest))
        }
        MatrixExpr::MatMul(mut v) => loop {
            let len = v.len();
            let best = (0..len)
                .map(|r| {
                    let mut rot = v.clone();
                    rot.rotate_left(r);
                    rot
                })
                .min_by(|a, b| rotation_order(a, b))
                .unwrap();
            match canon_mul(best.clone()) {
                MatrixExpr::MatMul(w) if w == best => return ScalarExpr::Trace(Box::new(MatrixExpr::MatMul(w))),
                MatrixExpr::MatMul(w) if w.len() < len => v = w,
                MatrixExpr::MatMul(w) => return ScalarExpr::Trace(Box::new(MatrixExpr::MatMul(w))),
                other => return canon_trace(other),
            }
        },
        other => ScalarExpr::Trace(Box::new(other)),
    }
}
