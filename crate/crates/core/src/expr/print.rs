use crate::matrix::ComplexMatrix;
use crate::C64;

use super::{AnalyticFunction, MatrixExpr, ScalarExpr};

const SUM: u8 = 0;
const PRODUCT: u8 = 1;
const ATOM: u8 = 2;

/// Renders a scalar expression in the input grammar.
pub fn pretty_print(e: &ScalarExpr) -> String {
    let mut out = String::new();
    scalar(e, SUM, &mut out);
    out
}

/// Renders a matrix expression in the (extended) matrix grammar.
pub fn pretty_print_matrix(e: &MatrixExpr) -> String {
    let mut out = String::new();
    matrix(e, SUM, &mut out);
    out
}

fn real(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.fract() == 0.0 && x.abs() < 1e15 {
        return format!("{}", x as i64);
    }
    format!("{x:?}")
}

/// Complex literal: `3`, `-2i`, `(1+2i)`.
pub fn format_complex(z: C64) -> String {
    if z.im == 0.0 {
        real(z.re)
    } else if z.re == 0.0 {
        format!("{}i", real(z.im))
    } else if z.im < 0.0 {
        format!("({}-{}i)", real(z.re), real(-z.im))
    } else {
        format!("({}+{}i)", real(z.re), real(z.im))
    }
}

fn negative_real(z: C64) -> bool {
    z.im == 0.0 && z.re < 0.0
}

/// Splits a leading negative real coefficient off a sum term so it can be
/// printed after a `-`.
fn negated_scalar(e: &ScalarExpr) -> Option<ScalarExpr> {
    match e {
        ScalarExpr::Lit(z) if negative_real(*z) => Some(ScalarExpr::Lit(-z)),
        ScalarExpr::Product(v) => match v.first() {
            Some(ScalarExpr::Lit(z)) if negative_real(*z) => {
                let mut rest = v[1..].to_vec();
                if *z != C64::new(-1.0, 0.0) {
                    rest.insert(0, ScalarExpr::Lit(-z));
                }
                Some(if rest.len() == 1 { rest.pop().unwrap() } else { ScalarExpr::Product(rest) })
            }
            _ => None,
        },
        ScalarExpr::Neg(x) => Some((**x).clone()),
        _ => None,
    }
}

fn negated_matrix(e: &MatrixExpr) -> Option<MatrixExpr> {
    match e {
        MatrixExpr::ScalarMul(s, m) => {
            let pos = negated_scalar(s)?;
            Some(if pos.is_lit(1.0) { (**m).clone() } else { MatrixExpr::ScalarMul(Box::new(pos), m.clone()) })
        }
        _ => None,
    }
}

fn scalar(e: &ScalarExpr, prec: u8, out: &mut String) {
    match e {
        ScalarExpr::Lit(z) => out.push_str(&format_complex(*z)),
        ScalarExpr::Param(p) => {
            out.push('@');
            out.push_str(p);
        }
        ScalarExpr::Trace(m) => call("tr", &[m], out),
        ScalarExpr::Det(m) => call("det", &[m], out),
        ScalarExpr::Entry(m, i, j) => {
            out.push_str("entry(");
            matrix(m, SUM, out);
            out.push_str(&format!(", {i}, {j})"));
        }
        ScalarExpr::Bilinear { a, m, b, conj_left } => {
            out.push_str(if *conj_left { "bilc(" } else { "bil(" });
            vector(a, out);
            out.push_str(", ");
            matrix(m, SUM, out);
            out.push_str(", ");
            vector(b, out);
            out.push(')');
        }
        ScalarExpr::Sum(v) => {
            let paren = prec > SUM;
            if paren {
                out.push('(');
            }
            for (k, t) in v.iter().enumerate() {
                match (k, negated_scalar(t)) {
                    (0, _) => scalar(t, SUM, out),
                    (_, Some(pos)) => {
                        out.push_str(" - ");
                        scalar(&pos, PRODUCT, out);
                    }
                    (_, None) => {
                        out.push_str(" + ");
                        scalar(t, PRODUCT, out);
                    }
                }
            }
            if paren {
                out.push(')');
            }
        }
        ScalarExpr::Product(v) => {
            let paren = prec > PRODUCT;
            if paren {
                out.push('(');
            }
            let mut factors = v.as_slice();
            if v.len() > 1 && v[0].is_lit(-1.0) {
                out.push('-');
                factors = &v[1..];
            }
            for (k, f) in factors.iter().enumerate() {
                if k > 0 {
                    out.push('*');
                }
                scalar(f, ATOM, out);
            }
            if paren {
                out.push(')');
            }
        }
        ScalarExpr::Neg(x) => {
            if prec > PRODUCT {
                out.push('(');
            }
            out.push('-');
            scalar(x, ATOM, out);
            if prec > PRODUCT {
                out.push(')');
            }
        }
    }
}

fn vector(v: &[C64], out: &mut String) {
    out.push('[');
    let items: Vec<String> = v.iter().map(|z| format_complex(*z)).collect();
    out.push_str(&items.join(", "));
    out.push(']');
}

fn literal(m: &ComplexMatrix, out: &mut String) {
    out.push('[');
    for i in 0..m.n() {
        if i > 0 {
            out.push_str("; ");
        }
        let row: Vec<String> = (0..m.n()).map(|j| format_complex(m[(i, j)])).collect();
        out.push_str(&row.join(", "));
    }
    out.push(']');
}

fn call(name: &str, args: &[&MatrixExpr], out: &mut String) {
    out.push_str(name);
    out.push('(');
    for (k, a) in args.iter().enumerate() {
        if k > 0 {
            out.push_str(", ");
        }
        matrix(a, SUM, out);
    }
    out.push(')');
}

fn matrix(e: &MatrixExpr, prec: u8, out: &mut String) {
    match e {
        MatrixExpr::Var(name, _) | MatrixExpr::Sym(name, _) => out.push_str(name),
        MatrixExpr::VarConj(name, _) => {
            out.push_str("conj(");
            out.push_str(name);
            out.push(')');
        }
        MatrixExpr::Const(m) => literal(m, out),
        MatrixExpr::Identity(_) => out.push('I'),
        MatrixExpr::Zero(_) => out.push('0'),
        MatrixExpr::Transpose(m) => call("tp", &[m], out),
        MatrixExpr::Conjugate(m) => call("conj", &[m], out),
        MatrixExpr::Adjoint(m) => call("adj", &[m], out),
        MatrixExpr::Inverse(m) => call("inv", &[m], out),
        MatrixExpr::Hadamard(v) => call("hd", &v.iter().collect::<Vec<_>>(), out),
        MatrixExpr::Apply(f, m) => match f {
            AnalyticFunction::Exp => call("exp", &[m], out),
            AnalyticFunction::Log => call("log", &[m], out),
            AnalyticFunction::XLogX => call("xlogx", &[m], out),
            AnalyticFunction::Power(k) => {
                out.push_str("pow(");
                matrix(m, SUM, out);
                out.push_str(&format!(", {k})"));
            }
            AnalyticFunction::Series(c) => {
                out.push_str("series(");
                vector(c, out);
                out.push_str(", ");
                matrix(m, SUM, out);
                out.push(')');
            }
        },
        MatrixExpr::MatPow(m, k) => {
            let atomic = matches!(
                **m,
                MatrixExpr::Var(..)
                    | MatrixExpr::Sym(..)
                    | MatrixExpr::VarConj(..)
                    | MatrixExpr::Identity(_)
                    | MatrixExpr::Const(_)
                    | MatrixExpr::Transpose(_)
                    | MatrixExpr::Conjugate(_)
                    | MatrixExpr::Adjoint(_)
                    | MatrixExpr::Inverse(_)
                    | MatrixExpr::Hadamard(_)
                    | MatrixExpr::Apply(..)
            );
            if !atomic {
                out.push('(');
            }
            matrix(m, SUM, out);
            if !atomic {
                out.push(')');
            }
            out.push_str(&format!("^{k}"));
        }
        MatrixExpr::ScalarMul(s, m) => {
            let paren = prec > PRODUCT;
            if paren {
                out.push('(');
            }
            if s.is_lit(-1.0) {
                out.push('-');
                matrix(m, ATOM, out);
            } else {
                scalar(s, PRODUCT, out);
                out.push('*');
                matrix(m, PRODUCT, out);
            }
            if paren {
                out.push(')');
            }
        }
        MatrixExpr::MatMul(v) => {
            let paren = prec > PRODUCT;
            if paren {
                out.push('(');
            }
            for (k, f) in v.iter().enumerate() {
                if k > 0 {
                    out.push('*');
                }
                matrix(f, ATOM, out);
            }
            if paren {
                out.push(')');
            }
        }
        MatrixExpr::Add(v) => {
            let paren = prec > SUM;
            if paren {
                out.push('(');
            }
            for (k, t) in v.iter().enumerate() {
                match (k, negated_matrix(t)) {
                    (0, _) => matrix(t, SUM, out),
                    (_, Some(pos)) => {
                        out.push_str(" - ");
                        matrix(&pos, PRODUCT, out);
                    }
                    (_, None) => {
                        out.push_str(" + ");
                        matrix(t, PRODUCT, out);
                    }
                }
            }
            if paren {
                out.push(')');
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prints_basic_forms() {
        let z = MatrixExpr::var("Z", 2);
        let a = MatrixExpr::sym("A", 2);
        assert_eq!(pretty_print(&z.clone().trace()), "tr(Z)");
        assert_eq!(pretty_print(&(a * z.clone()).trace()), "tr(A*Z)");
        assert_eq!(pretty_print(&z.pow(3).det()), "det(Z^3)");
    }

    #[test]
    fn formats_complex_literals() {
        assert_eq!(format_complex(C64::new(2.0, 0.0)), "2");
        assert_eq!(format_complex(C64::new(-0.5, 0.0)), "-0.5");
        assert_eq!(format_complex(C64::new(0.0, -2.0)), "-2i");
        assert_eq!(format_complex(C64::new(1.0, 2.0)), "(1+2i)");
        assert_eq!(format_complex(C64::new(1.0, -2.5)), "(1-2.5i)");
        assert_eq!(format_complex(C64::new(1e-300, 0.0)), "1e-300");
    }
}
