//! Closed form vs iterative solver on the built-in examples at n = 2, 4, 8.

use std::path::Path;

use serde::Serialize;

use wirtinger::optimizer::{
    solve_frobenius_fit, solve_gibbs, solve_max_entropy, solve_purity_min, solve_stationary, Problem, SolveOptions,
    SolveReport,
};
use wirtinger::random::random_complex;
use wirtinger::{ComplexMatrix, Result};

use crate::commands::{write_json, CmdResult};

const AGREEMENT_TOL: f64 = 1e-4;
const CLOSED_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Serialize)]
struct Row {
    example: String,
    n: usize,
    distance: f64,
    closed_grad_residual: f64,
    iterative_grad_residual: f64,
    max_constraint_residual: f64,
    iterative_converged: bool,
    pass: bool,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

fn compare(example: String, closed: SolveReport, problem: Problem, opts: &SolveOptions) -> Result<Row> {
    let n = problem.n();
    let iter = solve_stationary(&problem, opts)?;
    let distance = iter.z_star.sub(&closed.z_star).frobenius_norm();
    let max_constraint_residual =
        max_abs(&closed.constraint_residuals).max(max_abs(&iter.constraint_residuals));
    let pass = closed.grad_residual <= CLOSED_RESIDUAL_TOL
        && closed.converged
        && iter.converged
        && distance <= AGREEMENT_TOL;
    Ok(Row {
        example,
        n,
        distance,
        closed_grad_residual: closed.grad_residual,
        iterative_grad_residual: iter.grad_residual,
        max_constraint_residual,
        iterative_converged: iter.converged,
        pass,
    })
}

fn gibbs_instance(n: usize, seed: u64) -> (ComplexMatrix, f64, String) {
    if n == 2 {
        // two-level system whose solution is beta = 1
        let e = (-1f64).exp() / (1.0 + (-1f64).exp());
        return (ComplexMatrix::from_real_diag(&[0.0, 1.0]), e, "gibbs beta=1".into());
    }
    let h = random_complex(n, seed.wrapping_add(n as u64)).hermitian_part();
    let (w, _) = h.hermitian_eigh().expect("Hermitian eigendecomposition");
    (h, 0.5 * (w[0] + w[n - 1]), "gibbs midpoint".into())
}

fn rows(seed: u64) -> Result<Vec<Row>> {
    let opts = SolveOptions { seed, ..Default::default() };
    let mut rows = Vec::new();
    for n in [2usize, 4, 8] {
        rows.push(compare("purity".into(), solve_purity_min(n)?, Problem::purity(n)?, &opts)?);
        rows.push(compare("entropy".into(), solve_max_entropy(n)?, Problem::max_entropy(n)?, &opts)?);
        let (h, e, label) = gibbs_instance(n, seed);
        rows.push(compare(label, solve_gibbs(&h, e)?, Problem::gibbs(&h, e)?, &opts)?);
        let l = random_complex(n, seed.wrapping_add(100 + n as u64));
        let norm = l.frobenius_norm();
        let cases = [
            ("frobenius norm-only", Some(0.5 * norm), None),
            ("frobenius trace-only", None, Some(1.0)),
            ("frobenius both", Some(norm), Some(1.0)),
        ];
        for (label, c, d) in cases {
            rows.push(compare(label.into(), solve_frobenius_fit(&l, c, d)?, Problem::frobenius_fit(&l, c, d)?, &opts)?);
        }
    }
    Ok(rows)
}

pub fn run(seed: u64, out: Option<&Path>) -> CmdResult {
    let rows = rows(seed)?;
    say!(
        "{:<22} {:>2} {:>11} {:>11} {:>11} {:>11} {:>6}",
        "example", "n", "|Zc - Zi|", "closed res", "iter res", "max |h|", "status"
    );
    for r in &rows {
        say!(
            "{:<22} {:>2} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e} {:>6}",
            r.example,
            r.n,
            r.distance,
            r.closed_grad_residual,
            r.iterative_grad_residual,
            r.max_constraint_residual,
            if r.pass { "ok" } else { "FAIL" }
        );
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    say!("{} of {} rows within tolerance (seed {seed})", rows.len() - failed, rows.len());
    write_json(out, &serde_json::json!({ "seed": seed, "rows": rows }))?;
    Ok(if failed == 0 { 0 } else { 1 })
}
