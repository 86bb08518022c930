//! Text grammar.
//!
//! Parsing happens in two passes: a precedence-climbing parser builds an
//! untyped tree, then elaboration assigns scalar/matrix kinds, resolves
//! identifiers against the declarations and infers the dimension of `I`.
//! Doing it in two steps lets one grammar cover both scalar and matrix
//! contexts (`2*Z`, `tr(Z)*Z`, `(Z + I)^2`).

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::C64;

use super::canon::conj_scalar;
use super::{canonicalize_scalar, AnalyticFunction, Decls, MatrixExpr, ScalarExpr};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, bool),
    Ident(String),
    Param(String),
    Punct(char),
    End,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let ident_char = |c: u8| c.is_ascii_alphanumeric() || c == b'_';
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let value: f64 = text[start..i]
                .parse()
                .map_err(|_| Error::Syntax { pos: start, msg: format!("bad number `{}`", &text[start..i]) })?;
            let imag = i < bytes.len() && bytes[i] == b'i' && !bytes.get(i + 1).is_some_and(|&d| ident_char(d));
            if imag {
                i += 1;
            }
            out.push((start, Tok::Num(value, imag)));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && ident_char(bytes[i]) {
                i += 1;
            }
            out.push((start, Tok::Ident(text[start..i].to_string())));
        } else if c == b'@' {
            let start = i;
            i += 1;
            let name_start = i;
            while i < bytes.len() && ident_char(bytes[i]) {
                i += 1;
            }
            if name_start == i {
                return Err(Error::Syntax { pos: start, msg: "expected parameter name after `@`".into() });
            }
            out.push((start, Tok::Param(text[name_start..i].to_string())));
        } else if b"+-*^(),;[]".contains(&c) {
            out.push((i, Tok::Punct(c as char)));
            i += 1;
        } else {
            let ch = text[i..].chars().next().unwrap();
            return Err(Error::Syntax { pos: i, msg: format!("unexpected character `{ch}`") });
        }
    }
    out.push((text.len(), Tok::End));
    Ok(out)
}

#[derive(Debug, Clone)]
enum Node {
    Num(C64),
    Param(String),
    Ident(usize, String),
    Call(usize, String, Vec<Node>),
    Literal(usize, Vec<Vec<Node>>),
    Add(Vec<(bool, Node)>),
    Mul(Vec<Node>),
    Neg(Box<Node>),
    Pow(usize, Box<Node>, i64),
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn next(&mut self) -> (usize, Tok) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Punct(c) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{c}`")))
        }
    }

    fn unexpected(&self, wanted: &str) -> Error {
        let found = match self.peek() {
            Tok::End => "end of input".to_string(),
            Tok::Num(v, false) => format!("`{v}`"),
            Tok::Num(v, true) => format!("`{v}i`"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Param(s) => format!("`@{s}`"),
            Tok::Punct(c) => format!("`{c}`"),
        };
        Error::Syntax { pos: self.pos(), msg: format!("expected {wanted}, found {found}") }
    }

    fn sum(&mut self) -> Result<Node> {
        let mut terms = vec![(false, self.product()?)];
        loop {
            if self.eat('+') {
                terms.push((false, self.product()?));
            } else if self.eat('-') {
                terms.push((true, self.product()?));
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 && !terms[0].0 { terms.pop().unwrap().1 } else { Node::Add(terms) })
    }

    fn product(&mut self) -> Result<Node> {
        let mut factors = vec![self.unary()?];
        while self.eat('*') {
            factors.push(self.unary()?);
        }
        Ok(if factors.len() == 1 { factors.pop().unwrap() } else { Node::Mul(factors) })
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Node> {
        let mut base = self.atom()?;
        while *self.peek() == Tok::Punct('^') {
            let pos = self.pos();
            self.next();
            let k = self.integer()?;
            base = Node::Pow(pos, Box::new(base), k);
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<i64> {
        let neg = self.eat('-');
        match self.peek().clone() {
            Tok::Num(v, false) if v.fract() == 0.0 && v.abs() < 1e9 => {
                self.next();
                Ok(if neg { -(v as i64) } else { v as i64 })
            }
            _ => Err(self.unexpected("an integer")),
        }
    }

    fn atom(&mut self) -> Result<Node> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(v, imag) => {
                self.next();
                Ok(Node::Num(if imag { C64::new(0.0, v) } else { C64::new(v, 0.0) }))
            }
            Tok::Param(p) => {
                self.next();
                Ok(Node::Param(p))
            }
            Tok::Ident(name) => {
                self.next();
                if *self.peek() == Tok::Punct('(') {
                    self.next();
                    let mut args = vec![self.sum()?];
                    while self.eat(',') {
                        args.push(self.sum()?);
                    }
                    self.expect(')')?;
                    Ok(Node::Call(pos, name, args))
                } else {
                    Ok(Node::Ident(pos, name))
                }
            }
            Tok::Punct('(') => {
                self.next();
                let inner = self.sum()?;
                self.expect(')')?;
                Ok(inner)
            }
            Tok::Punct('[') => {
                self.next();
                let mut rows = vec![vec![self.sum()?]];
                loop {
                    if self.eat(',') {
                        rows.last_mut().unwrap().push(self.sum()?);
                    } else if self.eat(';') {
                        rows.push(vec![self.sum()?]);
                    } else {
                        break;
                    }
                }
                self.expect(']')?;
                Ok(Node::Literal(pos, rows))
            }
            _ => Err(self.unexpected("an expression")),
        }
    }
}

fn parse_tree(text: &str) -> Result<Node> {
    let mut p = Parser { toks: tokenize(text)?, at: 0 };
    let node = p.sum()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected("an operator or end of input"));
    }
    Ok(node)
}

/// Parses a scalar objective.
pub fn parse(text: &str, decls: &Decls) -> Result<ScalarExpr> {
    let node = parse_tree(text)?;
    let el = Elab { decls };
    if el.is_matrix(&node)? {
        return Err(Error::Shape("expected a scalar expression, found a matrix".into()));
    }
    el.scalar(&node)
}

/// Parses a matrix-valued expression. A bare `0` or `I` takes the common
/// dimension of the declarations.
pub fn parse_matrix(text: &str, decls: &Decls) -> Result<MatrixExpr> {
    let node = parse_tree(text)?;
    let el = Elab { decls };
    let n = el.dim(&node)?.or_else(|| decls.common_dim());
    match n {
        Some(n) => el.matrix(&node, n),
        None => Err(Error::Shape("cannot infer the matrix dimension".into())),
    }
}

const MATRIX_FNS: &[&str] = &["conj", "adj", "tp", "exp", "log", "xlogx", "inv", "hd", "pow", "series"];
const SCALAR_FNS: &[&str] = &["tr", "det", "frob2", "entry", "bil", "bilc"];

struct Elab<'a> {
    decls: &'a Decls,
}

impl Elab<'_> {
    /// Kind inference: true for matrix-valued nodes.
    fn is_matrix(&self, node: &Node) -> Result<bool> {
        Ok(match node {
            Node::Num(_) | Node::Param(_) => false,
            Node::Ident(pos, name) => self.ident_is_matrix(*pos, name)?,
            Node::Literal(_, rows) => rows.len() > 1 || rows[0].len() == 1,
            Node::Call(pos, name, args) => {
                if name == "conj" && args.len() == 1 {
                    self.is_matrix(&args[0])?
                } else if MATRIX_FNS.contains(&name.as_str()) {
                    true
                } else if SCALAR_FNS.contains(&name.as_str()) {
                    false
                } else {
                    return Err(Error::Syntax { pos: *pos, msg: format!("unknown function `{name}`") });
                }
            }
            Node::Add(terms) => {
                let mut any = false;
                for (_, t) in terms {
                    any |= self.is_matrix(t)?;
                }
                any
            }
            Node::Mul(factors) => {
                let mut any = false;
                for f in factors {
                    any |= self.is_matrix(f)?;
                }
                any
            }
            Node::Neg(x) | Node::Pow(_, x, _) => self.is_matrix(x)?,
        })
    }

    fn ident_is_matrix(&self, pos: usize, name: &str) -> Result<bool> {
        if name == "I" || self.decls.get(name).is_some() {
            Ok(true)
        } else if name == "i" {
            Ok(false)
        } else if SCALAR_FNS.contains(&name) || MATRIX_FNS.contains(&name) {
            Err(Error::Syntax { pos, msg: format!("`{name}` needs an argument list") })
        } else {
            Err(Error::Undeclared(name.to_string()))
        }
    }

    /// Dimension of a matrix-valued node when it can be read off a leaf.
    fn dim(&self, node: &Node) -> Result<Option<usize>> {
        if !self.is_matrix(node)? {
            return Ok(None);
        }
        Ok(match node {
            Node::Ident(_, name) => self.decls.get(name).map(|d| d.n),
            Node::Literal(_, rows) => Some(rows.len()),
            Node::Call(_, name, args) => {
                let args: &[Node] = if name == "series" { &args[1..] } else if name == "pow" { &args[..1] } else { args };
                let mut found = None;
                for a in args {
                    if let Some(n) = self.dim(a)? {
                        found = Some(n);
                        break;
                    }
                }
                found
            }
            Node::Add(terms) => {
                let mut found = None;
                for (_, t) in terms {
                    if let Some(n) = self.dim(t)? {
                        found = Some(n);
                        break;
                    }
                }
                found
            }
            Node::Mul(factors) => {
                let mut found = None;
                for f in factors {
                    if let Some(n) = self.dim(f)? {
                        found = Some(n);
                        break;
                    }
                }
                found
            }
            Node::Neg(x) | Node::Pow(_, x, _) => self.dim(x)?,
            Node::Num(_) | Node::Param(_) => None,
        })
    }

    fn matrix_arg(&self, node: &Node) -> Result<MatrixExpr> {
        match self.dim(node)?.or_else(|| self.decls.common_dim()) {
            Some(n) => self.matrix(node, n),
            None if self.is_matrix(node)? => Err(Error::Shape("cannot infer the dimension of `I`".into())),
            None => Err(Error::Shape("expected a matrix argument, found a scalar".into())),
        }
    }

    fn scalar(&self, node: &Node) -> Result<ScalarExpr> {
        match node {
            Node::Num(z) => Ok(ScalarExpr::Lit(*z)),
            Node::Param(p) => Ok(ScalarExpr::param(p.clone())),
            Node::Ident(_, name) if name == "i" => Ok(ScalarExpr::Lit(C64::new(0.0, 1.0))),
            Node::Ident(..) | Node::Literal(..) => Err(Error::Shape("expected a scalar, found a matrix".into())),
            Node::Add(terms) => {
                let mut out = Vec::new();
                for (neg, t) in terms {
                    let s = self.scalar(t)?;
                    out.push(if *neg { ScalarExpr::Neg(Box::new(s)) } else { s });
                }
                Ok(ScalarExpr::Sum(out))
            }
            Node::Mul(factors) => Ok(ScalarExpr::Product(factors.iter().map(|f| self.scalar(f)).collect::<Result<_>>()?)),
            Node::Neg(x) => Ok(ScalarExpr::Neg(Box::new(self.scalar(x)?))),
            Node::Pow(pos, x, k) => {
                if *k < 0 {
                    return Err(Error::Syntax { pos: *pos, msg: "negative powers of scalars are not supported".into() });
                }
                let base = self.scalar(x)?;
                Ok(match *k {
                    0 => ScalarExpr::real(1.0),
                    1 => base,
                    k => ScalarExpr::Product(vec![base; k as usize]),
                })
            }
            Node::Call(pos, name, args) => self.scalar_call(*pos, name, args),
        }
    }

    fn arity(&self, pos: usize, name: &str, args: &[Node], k: usize) -> Result<()> {
        if args.len() == k {
            Ok(())
        } else {
            Err(Error::Syntax { pos, msg: format!("`{name}` takes {k} argument(s), got {}", args.len()) })
        }
    }

    fn scalar_call(&self, pos: usize, name: &str, args: &[Node]) -> Result<ScalarExpr> {
        match name {
            "tr" | "det" | "frob2" => {
                self.arity(pos, name, args, 1)?;
                let m = self.matrix_arg(&args[0])?;
                Ok(match name {
                    "tr" => m.trace(),
                    "det" => m.det(),
                    _ => m.frob2(),
                })
            }
            "conj" => {
                self.arity(pos, name, args, 1)?;
                Ok(conj_scalar(&self.scalar(&args[0])?))
            }
            "entry" => {
                self.arity(pos, name, args, 3)?;
                let m = self.matrix_arg(&args[0])?;
                let i = self.index(&args[1])?;
                let j = self.index(&args[2])?;
                m.entry(i, j)
            }
            "bil" | "bilc" => {
                self.arity(pos, name, args, 3)?;
                let a = self.vector(&args[0])?;
                let m = self.matrix_arg(&args[1])?;
                let b = self.vector(&args[2])?;
                ScalarExpr::bilinear(a, m, b, name == "bilc")
            }
            _ => Err(Error::Shape(format!("`{name}` is matrix-valued, expected a scalar"))),
        }
    }

    fn literal_value(&self, node: &Node) -> Result<C64> {
        let s = canonicalize_scalar(&self.scalar(node)?);
        s.as_lit().ok_or_else(|| Error::Input(format!("expected a numeric literal, found `{s}`")))
    }

    fn index(&self, node: &Node) -> Result<usize> {
        let z = self.literal_value(node)?;
        if z.im == 0.0 && z.re >= 0.0 && z.re.fract() == 0.0 {
            Ok(z.re as usize)
        } else {
            Err(Error::Input("entry indices must be non-negative integers".into()))
        }
    }

    fn vector(&self, node: &Node) -> Result<Vec<C64>> {
        match node {
            Node::Literal(_, rows) if rows.len() == 1 => rows[0].iter().map(|x| self.literal_value(x)).collect(),
            _ => Err(Error::Input("expected a vector literal `[a, b, ...]`".into())),
        }
    }

    fn matrix(&self, node: &Node, n: usize) -> Result<MatrixExpr> {
        if !self.is_matrix(node)? {
            let s = canonicalize_scalar(&self.scalar(node)?);
            if s.is_lit(0.0) {
                return Ok(MatrixExpr::Zero(n));
            }
            return Err(Error::Shape(format!("expected a matrix, found the scalar `{s}`")));
        }
        let m = match node {
            Node::Ident(_, name) if name == "I" => MatrixExpr::Identity(n),
            Node::Ident(_, name) => {
                let d = self.decls.get(name).ok_or_else(|| Error::Undeclared(name.clone()))?;
                if d.constant {
                    MatrixExpr::Sym(d.name.clone(), d.n)
                } else {
                    MatrixExpr::Var(d.name.clone(), d.n)
                }
            }
            Node::Literal(pos, rows) => {
                let k = rows.len();
                if rows.iter().any(|r| r.len() != k) {
                    return Err(Error::Syntax { pos: *pos, msg: "matrix literals must be square".into() });
                }
                let mut data = Vec::with_capacity(k * k);
                for r in rows {
                    for x in r {
                        data.push(self.literal_value(x)?);
                    }
                }
                MatrixExpr::Const(ComplexMatrix::from_row_major(k, data))
            }
            Node::Add(terms) => {
                let mut out = Vec::new();
                for (neg, t) in terms {
                    let m = self.matrix(t, n)?;
                    out.push(if *neg { m.scale(ScalarExpr::real(-1.0)) } else { m });
                }
                let mut acc = out.remove(0);
                for m in out {
                    acc = acc.try_add(m)?;
                }
                acc
            }
            Node::Mul(factors) => {
                let mut coef: Vec<ScalarExpr> = Vec::new();
                let mut mats: Vec<MatrixExpr> = Vec::new();
                for f in factors {
                    if self.is_matrix(f)? {
                        mats.push(self.matrix(f, n)?);
                    } else {
                        coef.push(self.scalar(f)?);
                    }
                }
                let mut acc = mats.remove(0);
                for m in mats {
                    acc = acc.try_matmul(m)?;
                }
                match coef.len() {
                    0 => acc,
                    1 => acc.scale(coef.pop().unwrap()),
                    _ => acc.scale(ScalarExpr::Product(coef)),
                }
            }
            Node::Neg(x) => self.matrix(x, n)?.scale(ScalarExpr::real(-1.0)),
            Node::Pow(_, x, k) => {
                let base = self.matrix(x, n)?;
                if *k >= 0 {
                    base.pow(*k as u32)
                } else {
                    base.inv().pow(k.unsigned_abs() as u32)
                }
            }
            Node::Call(pos, name, args) => self.matrix_call(*pos, name, args, n)?,
            Node::Num(_) | Node::Param(_) => unreachable!("scalar nodes handled above"),
        };
        if m.dim() != n {
            return Err(Error::Shape(format!("expected a {n}x{n} matrix, found {0}x{0}", m.dim())));
        }
        Ok(m)
    }

    fn matrix_call(&self, pos: usize, name: &str, args: &[Node], n: usize) -> Result<MatrixExpr> {
        let unary = |f: fn(MatrixExpr) -> MatrixExpr| -> Result<MatrixExpr> {
            self.arity(pos, name, args, 1)?;
            Ok(f(self.matrix(&args[0], n)?))
        };
        match name {
            "conj" => unary(MatrixExpr::conj),
            "adj" => unary(MatrixExpr::adj),
            "tp" => unary(MatrixExpr::t),
            "inv" => unary(MatrixExpr::inv),
            "exp" => unary(|m| m.apply(AnalyticFunction::Exp)),
            "log" => unary(|m| m.apply(AnalyticFunction::Log)),
            "xlogx" => unary(|m| m.apply(AnalyticFunction::XLogX)),
            "hd" => {
                if args.len() < 2 {
                    return Err(Error::Syntax { pos, msg: "`hd` takes at least 2 arguments".into() });
                }
                let mut acc = self.matrix(&args[0], n)?;
                for a in &args[1..] {
                    acc = acc.try_hadamard(self.matrix(a, n)?)?;
                }
                Ok(acc)
            }
            "pow" => {
                self.arity(pos, name, args, 2)?;
                let z = self.literal_value(&args[1])?;
                if z.im != 0.0 || z.re.fract() != 0.0 {
                    return Err(Error::Input("`pow` exponent must be an integer".into()));
                }
                Ok(self.matrix(&args[0], n)?.apply(AnalyticFunction::Power(z.re as i64)))
            }
            "series" => {
                self.arity(pos, name, args, 2)?;
                let c = self.vector(&args[0])?;
                if c.is_empty() {
                    return Err(Error::Input("`series` needs at least one coefficient".into()));
                }
                Ok(self.matrix(&args[1], n)?.apply(AnalyticFunction::Series(c)))
            }
            _ => Err(Error::Shape(format!("`{name}` is scalar-valued, expected a matrix"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{canonicalize_matrix, pretty_print, StructureClass, VariableDecl};

    fn decls() -> Decls {
        Decls::new()
            .with(VariableDecl::new("Z", 2, StructureClass::Unstructured))
            .with(VariableDecl::constant("A", 2, StructureClass::Unstructured))
            .with(VariableDecl::new("W", 3, StructureClass::Unstructured))
    }

    #[test]
    fn grammar_examples() {
        let d = decls();
        let z = MatrixExpr::var("Z", 2);
        assert_eq!(parse("tr(Z^2)", &d).unwrap(), z.clone().pow(2).trace());
        let e = parse("tr(A*Z) + tr(A*conj(Z))", &d).unwrap();
        assert!(matches!(e, ScalarExpr::Sum(ref v) if v.len() == 2));
        let f = parse("frob2(Z - A)", &d).unwrap();
        let diff = z.try_sub(MatrixExpr::sym("A", 2)).unwrap();
        assert_eq!(f, ScalarExpr::Trace(Box::new(MatrixExpr::MatMul(vec![diff.clone().adj(), diff]))));
    }

    #[test]
    fn identity_takes_neighbouring_dimension() {
        let d = decls();
        let e = parse("tr((W + I)^2)", &d).unwrap();
        let ScalarExpr::Trace(m) = e else { panic!() };
        assert_eq!(m.dim(), 3);
    }

    #[test]
    fn complex_literals_and_params() {
        let d = decls();
        let e = canonicalize_scalar(&parse("(1+2i)*tr(Z) - @lam", &d).unwrap());
        assert_eq!(pretty_print(&e), "-@lam + (1+2i)*tr(Z)");
    }

    #[test]
    fn errors_carry_positions() {
        let d = decls();
        assert!(matches!(parse("tr(Z", &d), Err(Error::Syntax { pos: 4, .. })));
        assert!(matches!(parse("tr(Z) $", &d), Err(Error::Syntax { pos: 6, .. })));
        assert_eq!(parse("tr(Q)", &d), Err(Error::Undeclared("Q".into())));
        assert!(matches!(parse("tr(Z*W)", &d), Err(Error::Shape(_))));
        assert!(matches!(parse("Z", &d), Err(Error::Shape(_))));
        assert!(matches!(parse("tr(Z) + Z", &d), Err(Error::Shape(_))));
    }

    #[test]
    fn matrix_outputs_parse_back() {
        let d = decls();
        for text in ["tp(A) + I", "2*conj(Z)", "hd(I, Z)", "-inv(Z)^2", "[1, 2i; 0, 3]"] {
            let m = parse_matrix(text, &d).unwrap();
            let again = parse_matrix(&m.to_string(), &d).unwrap();
            assert_eq!(canonicalize_matrix(&again), canonicalize_matrix(&m), "{text}");
        }
        let square = Decls::new().with(VariableDecl::new("Z", 2, StructureClass::Unstructured));
        assert_eq!(parse_matrix("0", &square).unwrap(), MatrixExpr::Zero(2));
        assert!(parse_matrix("0", &d).is_err());
    }
}
