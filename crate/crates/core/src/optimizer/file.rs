//! Line-oriented problem files.
//!
//! ```text
//! # maximum entropy at fixed energy
//! variable R 2 hermitian
//! constant H = [0, 0; 0, 1]
//! objective -tr(R*log(R))
//! constraint beta: tr(R*H) = 0.5
//! constraint eta: tr(R) = 1
//! direction maximize
//! closed_form gibbs H=H E=0.5
//! project density
//! ```
//!
//! `constant NAME @path` reads a matrix file relative to the problem file.
//! Constraint names are optional (`lam`, `lam2`, ... are used otherwise).
//! Declarations may appear in any order relative to the expressions.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{eval_matrix, EvalEnv};
use crate::expr::{parse, parse_matrix, Decls, StructureClass, VariableDecl};
use crate::io::read_matrix;
use crate::matrix::ComplexMatrix;

use super::{Constraint, Direction, Problem};

/// Which closed form, if any, applies to a problem file.
#[derive(Debug, Clone, PartialEq)]
pub enum ClosedFormHint {
    None,
    Purity,
    Entropy,
    Gibbs { h: String, e: f64 },
    Frobenius { l: String, c: Option<f64>, d: Option<f64> },
}

#[derive(Debug, Clone)]
pub struct ProblemFile {
    pub problem: Problem,
    pub closed_form: ClosedFormHint,
    pub project_density: bool,
    /// The file text, echoed into reports.
    pub source: String,
}

impl ProblemFile {
    pub fn constant(&self, name: &str) -> Result<&ComplexMatrix> {
        self.problem
            .constants
            .get(name)
            .ok_or_else(|| Error::InvalidProblem(format!("closed form refers to unknown constant `{name}`")))
    }
}

fn err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Input(format!("line {line}: {msg}"))
}

fn number(line: usize, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| err(line, format!("expected a real number, found `{}`", s.trim())))
}

fn parse_hint(line: usize, rest: &str) -> Result<ClosedFormHint> {
    let mut words = rest.split_whitespace();
    let kind = words.next().ok_or_else(|| err(line, "closed_form needs a kind"))?;
    let mut args = BTreeMap::new();
    for w in words {
        let (k, v) = w.split_once('=').ok_or_else(|| err(line, format!("expected KEY=VALUE, found `{w}`")))?;
        args.insert(k.to_ascii_uppercase(), v.to_string());
    }
    let take = |k: &str| args.get(k).cloned();
    let num = |k: &str| take(k).map(|v| number(line, &v)).transpose();
    let hint = match kind {
        "none" => ClosedFormHint::None,
        "purity" => ClosedFormHint::Purity,
        "entropy" => ClosedFormHint::Entropy,
        "gibbs" => ClosedFormHint::Gibbs {
            h: take("H").ok_or_else(|| err(line, "gibbs needs H=<constant>"))?,
            e: num("E")?.ok_or_else(|| err(line, "gibbs needs E=<energy>"))?,
        },
        "frobenius" => ClosedFormHint::Frobenius {
            l: take("L").ok_or_else(|| err(line, "frobenius needs L=<constant>"))?,
            c: num("C")?,
            d: num("D")?,
        },
        other => return Err(err(line, format!("unknown closed form `{other}`"))),
    };
    Ok(hint)
}

/// Parses a problem file. `base_dir` resolves `@path` constants.
pub fn parse_problem(text: &str, base_dir: &Path) -> Result<ProblemFile> {
    let mut variable = None;
    let mut constants = BTreeMap::new();
    let mut objective = None;
    let mut constraint_lines = Vec::new();
    let mut direction = Direction::Minimize;
    let mut closed_form = ClosedFormHint::None;
    let mut project_density = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, rest) = content.split_once(char::is_whitespace).unwrap_or((content, ""));
        let rest = rest.trim();
        match key {
            "variable" => {
                if variable.is_some() {
                    return Err(err(line, "only one variable is supported"));
                }
                let w: Vec<&str> = rest.split_whitespace().collect();
                if !(2..=3).contains(&w.len()) {
                    return Err(err(line, "expected `variable NAME N [structure]`"));
                }
                let n: usize = w[1].parse().map_err(|_| err(line, format!("bad dimension `{}`", w[1])))?;
                let s = match w.get(2) {
                    Some(s) => s.parse::<StructureClass>().map_err(|e| err(line, e))?,
                    None => StructureClass::Unstructured,
                };
                variable = Some(VariableDecl::new(w[0], n, s));
            }
            "constant" => {
                let (name, value) = if let Some((name, v)) = rest.split_once('=') {
                    let m = parse_matrix(v.trim(), &Decls::new()).map_err(|e| err(line, e))?;
                    (name.trim(), eval_matrix(&m, &EvalEnv::new()).map_err(|e| err(line, e))?)
                } else if let Some((name, path)) = rest.split_once('@') {
                    let path = base_dir.join(path.trim());
                    let body = std::fs::read_to_string(&path)
                        .map_err(|e| err(line, format!("cannot read {}: {e}", path.display())))?;
                    (name.trim(), read_matrix(&body).map_err(|e| err(line, e))?)
                } else {
                    return Err(err(line, "expected `constant NAME = [..]` or `constant NAME @file`"));
                };
                if constants.insert(name.to_string(), value).is_some() {
                    return Err(err(line, format!("constant `{name}` defined twice")));
                }
            }
            "objective" => {
                if objective.replace((line, rest.to_string())).is_some() {
                    return Err(err(line, "objective given twice"));
                }
            }
            "constraint" => constraint_lines.push((line, rest.to_string())),
            "direction" => direction = rest.parse().map_err(|e| err(line, e))?,
            "closed_form" => closed_form = parse_hint(line, rest)?,
            "project" if rest == "density" => project_density = true,
            other => return Err(err(line, format!("unknown directive `{other}`"))),
        }
    }

    let variable = variable.ok_or_else(|| Error::Input("missing `variable` line".into()))?;
    let mut decls = Decls::new();
    decls.insert(variable.clone())?;
    for (name, m) in &constants {
        decls.insert(VariableDecl::constant(name.clone(), m.n(), StructureClass::Unstructured))?;
    }
    let (oline, otext) = objective.ok_or_else(|| Error::Input("missing `objective` line".into()))?;
    let objective = parse(&otext, &decls).map_err(|e| at_line(oline, e))?;

    let mut constraints = Vec::new();
    for (k, (line, body)) in constraint_lines.into_iter().enumerate() {
        let (name, body) = match body.split_once(':') {
            Some((name, b)) => (name.trim().to_string(), b.to_string()),
            None => (if k == 0 { "lam".to_string() } else { format!("lam{}", k + 1) }, body),
        };
        let (lhs, rhs) = body.rsplit_once('=').ok_or_else(|| err(line, "constraint needs `expr = value`"))?;
        let expr = parse(lhs.trim(), &decls).map_err(|e| at_line(line, e))?;
        constraints.push(Constraint::new(name, expr, number(line, rhs)?));
    }

    let problem = Problem::new(objective, variable, constraints, direction, constants)?;
    Ok(ProblemFile { problem, closed_form, project_density, source: text.to_string() })
}

/// Keeps syntax errors typed (their exit code differs) but adds the line.
fn at_line(line: usize, e: Error) -> Error {
    match e {
        Error::Syntax { pos, msg } => Error::Syntax { pos, msg: format!("line {line}: {msg}") },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::pretty_print;

    const GIBBS: &str = "\
# two-level system
variable R 2 hermitian
constant H = [0, 0; 0, 1]
objective -tr(R*log(R))
constraint beta: tr(R*H) = 0.5
constraint eta: tr(R) = 1
direction maximize
closed_form gibbs H=H E=0.5
";

    #[test]
    fn parses_gibbs_file() {
        let f = parse_problem(GIBBS, Path::new(".")).unwrap();
        assert_eq!(f.problem.direction, Direction::Maximize);
        assert_eq!(f.problem.constraints.len(), 2);
        assert_eq!(f.problem.constraints[0].name, "beta");
        assert_eq!(pretty_print(&f.problem.constraints[0].expr), "tr(R*H)");
        assert_eq!(f.closed_form, ClosedFormHint::Gibbs { h: "H".into(), e: 0.5 });
        assert_eq!(f.constant("H").unwrap()[(1, 1)].re, 1.0);
    }

    #[test]
    fn default_names_and_errors() {
        let f = parse_problem("variable R 2 hermitian\nobjective tr(R^2)\nconstraint tr(R) = 1\n", Path::new(".")).unwrap();
        assert_eq!(f.problem.constraints[0].name, "lam");
        assert!(parse_problem("objective tr(R)\n", Path::new(".")).is_err());
        assert!(matches!(
            parse_problem("variable R 2\nobjective frob2(R +)\n", Path::new(".")),
            Err(Error::Syntax { .. })
        ));
        assert!(parse_problem("variable R 2\nobjective frob2(R)\nbogus\n", Path::new(".")).is_err());
    }
}
