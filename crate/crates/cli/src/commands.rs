use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use wirtinger::fd::{grad_check, FdConfig, FdScheme, GradCheckReport};
use wirtinger::io::{read_matrix, write_matrix_text};
use wirtinger::optimizer::{
    constraint_residuals, grad_residual, objective_value, parse_problem, solve_frobenius_fit, solve_gibbs,
    solve_max_entropy, solve_purity_min, solve_stationary, ClosedFormHint, ProblemFile, SolveOptions, SolveReport,
};
use wirtinger::random::{random_density, random_structured};
use wirtinger::{
    derive as derive_structured, derive_unstructured, eval_scalar, parse, pretty_print_matrix, ComplexMatrix, Decls,
    Error, EvalEnv, StructureClass,
};

use crate::{DeclArgs, Failure, MethodArg};

pub type CmdResult = Result<u8, Failure>;

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(3, format!("{}: {e}", path.display()))
}

pub fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<(), Failure> {
    if let Some(path) = path {
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::new(1, e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

fn load_decls(args: &DeclArgs) -> Result<Decls, Failure> {
    let mut text = match &args.decls {
        Some(p) => std::fs::read_to_string(p).map_err(|e| io_err(p, e))?,
        None => String::new(),
    };
    for line in &args.decl {
        text.push('\n');
        text.push_str(line);
    }
    Ok(Decls::parse(&text)?)
}

fn var_dim(decls: &Decls, var: &str) -> Result<usize, Failure> {
    Ok(decls.get(var).ok_or_else(|| Error::Undeclared(var.to_string()))?.n)
}

pub fn derive(expr: &str, decls: &DeclArgs, var: &str, structure_aware: bool, out: Option<&Path>) -> CmdResult {
    let decls = load_decls(decls)?;
    let f = parse(expr, &decls)?;
    let pair = if structure_aware {
        derive_structured(&f, var, &decls)?
    } else {
        derive_unstructured(&f, var, var_dim(&decls, var)?)?
    };
    let (dz, dzc) = (pretty_print_matrix(&pair.d_dz), pretty_print_matrix(&pair.d_dzconj));
    say!("d/d{var}: {dz}");
    say!("d/d{var}*: {dzc}");
    write_json(
        out,
        &json!({
            "expr": expr,
            "variable": var,
            "structure": pair.structure_applied,
            "d_dz": dz,
            "d_dzconj": dzc,
        }),
    )?;
    Ok(0)
}

fn split_kv<'a>(s: &'a str, what: &str) -> Result<(&'a str, &'a str), Failure> {
    s.split_once('=').ok_or_else(|| Failure::new(3, format!("{what} must be NAME=VALUE, got `{s}`")))
}

pub fn eval(expr: &str, decls: &DeclArgs, bind: &[String], param: &[String], out: Option<&Path>) -> CmdResult {
    let decls = load_decls(decls)?;
    let f = parse(expr, &decls)?;
    let mut env = EvalEnv::new();
    for b in bind {
        let (name, file) = split_kv(b, "--bind")?;
        let path = Path::new(file);
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        env = env.bind(name, read_matrix(&text)?);
    }
    for p in param {
        let (name, value) = split_kv(p, "--param")?;
        let v: f64 = value.parse().map_err(|_| Failure::new(3, format!("bad parameter value `{value}`")))?;
        env = env.param(name, v);
    }
    env.validate(&decls)?;
    let v = eval_scalar(&f, &env)?;
    say!("value: {} {} {}i", v.re, if v.im < 0.0 { '-' } else { '+' }, v.im.abs());
    write_json(out, &json!({ "expr": expr, "re": v.re, "im": v.im }))?;
    Ok(0)
}

/// Random point for every declared symbol. Hermitian symbols are sampled
/// as densities mixed half-and-half with `I/n`, so their spectrum stays at
/// least `1/(2n)` and `log` / `xlogx` are smooth on the difference stencil.
fn random_env(decls: &Decls, seed: u64) -> EvalEnv {
    let mut env = EvalEnv::new();
    for (k, d) in decls.iter().enumerate() {
        let s = seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
        let m = match d.structure {
            StructureClass::Hermitian => {
                random_density(d.n, s).scale_re(0.5).add(&ComplexMatrix::identity(d.n).scale_re(0.5 / d.n as f64))
            }
            c => random_structured(d.n, c, s),
        };
        env = env.bind(d.name.clone(), m);
    }
    env
}

#[allow(clippy::too_many_arguments)]
pub fn check(
    expr: &str,
    decls: &DeclArgs,
    var: &str,
    points: usize,
    seed: u64,
    h: f64,
    tol: f64,
    out: Option<&Path>,
) -> CmdResult {
    if !(h > 0.0 && tol > 0.0) {
        return Err(Failure::new(3, "--h and --tol must be positive"));
    }
    let decls = load_decls(decls)?;
    let f = parse(expr, &decls)?;
    var_dim(&decls, var)?;
    // surface unsupported expressions as errors rather than failed points
    derive_structured(&f, var, &decls)?;
    let cfg = FdConfig { h, scheme: FdScheme::Central, tolerance: tol };
    let mut reports: Vec<GradCheckReport> = Vec::new();
    for k in 0..points {
        let env = random_env(&decls, seed.wrapping_mul(7919).wrapping_add(k as u64));
        let r = grad_check(&f, &env, var, &decls, &cfg);
        let status = if r.pass { "pass" } else { "FAIL" };
        match &r.error {
            Some(e) => say!("point {k}: {status} ({e})"),
            None => say!(
                "point {k}: {status} max rel err d/dZ {:.3e}, d/dZ* {:.3e}, worst entry ({}, {})",
                r.max_rel_err_dz, r.max_rel_err_dzconj, r.worst_entry.0, r.worst_entry.1
            ),
        }
        reports.push(r);
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    let worst = reports.iter().map(|r| r.max_rel_err_dz.max(r.max_rel_err_dzconj)).fold(0.0, f64::max);
    say!("{} of {} points passed; worst rel err {worst:.3e} (tol {tol:e}, h {h:e}, seed {seed})", points - failed, points);
    write_json(out, &json!({ "expr": expr, "variable": var, "seed": seed, "config": cfg, "points": reports }))?;
    Ok(if failed == 0 { 0 } else { 1 })
}

/// Evaluates a closed-form candidate against the file's own problem, so a
/// misdeclared hint shows up as a residual. Closed-form multipliers are
/// matched to the file's constraints by position.
fn closed_form_report(file: &ProblemFile, opts: &SolveOptions) -> Result<SolveReport, Failure> {
    let p = &file.problem;
    let n = p.n();
    let closed = match &file.closed_form {
        ClosedFormHint::None => {
            return Err(Failure::new(3, "problem file has no `closed_form` line"));
        }
        ClosedFormHint::Purity => solve_purity_min(n)?,
        ClosedFormHint::Entropy => solve_max_entropy(n)?,
        ClosedFormHint::Gibbs { h, e } => solve_gibbs(file.constant(h)?, *e)?,
        ClosedFormHint::Frobenius { l, c, d } => solve_frobenius_fit(file.constant(l)?, *c, *d)?,
    };
    if closed.z_star.n() != n || closed.multipliers.len() != p.constraints.len() {
        return Err(Failure::new(3, "closed form does not match the problem's variable or constraints"));
    }
    // closed-form multipliers come back keyed by their canonical names in
    // constraint order; re-key them onto the file's names
    let canonical: Vec<&str> = match &file.closed_form {
        ClosedFormHint::Gibbs { .. } => vec!["beta", "eta"],
        ClosedFormHint::Frobenius { c, d, .. } => {
            let mut v = Vec::new();
            if c.is_some() {
                v.push("lam");
            }
            if d.is_some() {
                v.extend(["eta_re", "eta_im"]);
            }
            v
        }
        _ => vec!["lam"],
    };
    let multipliers: BTreeMap<String, f64> =
        p.constraints.iter().zip(canonical).map(|(c, k)| (c.name.clone(), closed.multipliers[k])).collect();
    let z = closed.z_star;
    let grad_residual = grad_residual(p, &z, &multipliers)?;
    let constraint_residuals = constraint_residuals(p, &z)?;
    let converged = grad_residual <= opts.gtol && constraint_residuals.iter().all(|r| r.abs() <= opts.ctol);
    Ok(SolveReport {
        objective_value: objective_value(p, &z)?,
        z_star: z,
        multipliers,
        grad_residual,
        constraint_residuals,
        iterations: 0,
        converged,
        method: closed.method,
    })
}

pub fn print_report(file: &ProblemFile, r: &SolveReport) {
    let method = serde_json::to_value(r.method).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    say!("method: {method}");
    say!("converged: {}", r.converged);
    say!("iterations: {}", r.iterations);
    say!("objective: {}", r.objective_value);
    say!("grad_residual: {:e}", r.grad_residual);
    for (c, h) in file.problem.constraints.iter().zip(&r.constraint_residuals) {
        say!("residual {}: {h:e}", c.name);
    }
    for (name, v) in &r.multipliers {
        say!("multiplier {name}: {v}");
    }
    say!("{}:", file.problem.variable.name);
    say!("{}", write_matrix_text(&r.z_star).trim_end());
}

pub fn optimize(problem: &Path, method: MethodArg, gtol: f64, ctol: f64, seed: u64, out: Option<&Path>) -> CmdResult {
    let text = std::fs::read_to_string(problem).map_err(|e| io_err(problem, e))?;
    let base = problem.parent().unwrap_or(Path::new("."));
    let file = parse_problem(&text, base)?;
    let opts = SolveOptions { gtol, ctol, seed, project_density: file.project_density, ..Default::default() };
    let closed = match method {
        MethodArg::Closed => true,
        MethodArg::Iterative => false,
        MethodArg::Auto => file.closed_form != ClosedFormHint::None,
    };
    let report = if closed { closed_form_report(&file, &opts)? } else { solve_stationary(&file.problem, &opts)? };
    print_report(&file, &report);
    write_json(out, &json!({ "input": text, "seed": seed, "gtol": gtol, "ctol": ctol, "report": report }))?;
    Ok(if report.converged { 0 } else { 5 })
}
