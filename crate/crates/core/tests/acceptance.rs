//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Runs without the libtest harness so the lines are always
//! printed.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wirtinger::engine::power_entry_derivative;
use wirtinger::expr::{substitute_params, substitute_var};
use wirtinger::fd::{fd_wirtinger, grad_check, FdConfig};
use wirtinger::optimizer::{
    assemble_lagrangian, solve_frobenius_fit, solve_gibbs, solve_max_entropy, solve_purity_min, solve_stationary,
    Direction, Problem, SolveOptions,
};
use wirtinger::random::{random_complex, random_density, random_structured, random_vector};
use wirtinger::{
    canonicalize_matrix, derive, derive_unstructured, eval_matrix, eval_scalar, holomorphy_test, parse, parse_matrix,
    ComplexMatrix, Decls, EvalEnv, MatrixExpr, StructureClass, VariableDecl, C64,
};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Max entrywise error over `max(1, |reference|)`, as in the oracle.
fn rel_err(a: &ComplexMatrix, reference: &ComplexMatrix) -> f64 {
    a.data().iter().zip(reference.data()).map(|(x, r)| (x - r).norm() / r.norm().max(1.0)).fold(0.0, f64::max)
}

fn decls(n: usize, s: StructureClass) -> Decls {
    Decls::new()
        .with(VariableDecl::new("Z", n, s))
        .with(VariableDecl::constant("A", n, StructureClass::Unstructured))
        .with(VariableDecl::constant("B", n, StructureClass::Unstructured))
}

fn env(z: ComplexMatrix, seed: u64) -> EvalEnv {
    let n = z.n();
    EvalEnv::new()
        .bind("Z", z)
        .bind("A", random_complex(n, 1000 + seed))
        .bind("B", random_complex(n, 2000 + seed))
}

fn vector_literal(v: &[C64]) -> String {
    let items: Vec<String> = v.iter().map(|z| wirtinger::expr::format_complex(*z)).collect();
    format!("[{}]", items.join(", "))
}

fn outer(a: &[C64], b: &[C64]) -> ComplexMatrix {
    ComplexMatrix::from_fn(a.len(), |i, j| a[i] * b[j])
}

// ---------------------------------------------------------------------------

fn identity_rows() -> Outcome {
    const N: usize = 4;
    let d = decls(N, StructureClass::Unstructured);
    let a = random_vector(N, 31);
    let b = random_vector(N, 32);
    let (la, lb) = (vector_literal(&a), vector_literal(&b));
    let bil = format!("bil({la}, Z, {lb})");
    let bilc = format!("bilc({la}, Z, {lb})");
    // (f, d/dZ, d/dZ*) with the expected forms as grammar text; `None`
    // marks the two bilinear rows, whose expected values are outer products
    let rows: Vec<(&str, Option<(&str, &str)>)> = vec![
        (&bil, None),
        (&bilc, None),
        ("tr(Z)", Some(("I", "0"))),
        ("tr(conj(Z))", Some(("0", "I"))),
        ("tr(A*Z)", Some(("tp(A)", "0"))),
        ("tr(A*tp(Z))", Some(("A", "0"))),
        ("tr(A*conj(Z))", Some(("0", "tp(A)"))),
        ("tr(A*adj(Z))", Some(("0", "A"))),
        ("tr(Z*A*Z*B)", Some(("tp(A*Z*B + B*Z*A)", "0"))),
        ("tr(Z*A*tp(Z)*B)", Some(("tp(B)*Z*tp(A) + B*Z*A", "0"))),
        ("tr(Z*A*conj(Z)*B)", Some(("tp(A*conj(Z)*B)", "tp(B*Z*A)"))),
        ("tr(Z*A*adj(Z)*B)", Some(("tp(B)*conj(Z)*tp(A)", "B*Z*A"))),
        ("tr(Z^3)", Some(("3*tp(Z)^2", "0"))),
        ("tr(A*Z^3)", Some(("tp(A*Z^2 + Z*A*Z + Z^2*A)", "0"))),
        ("tr(exp(Z))", Some(("tp(exp(Z))", "0"))),
        ("frob2(Z)", Some(("conj(Z)", "Z"))),
        ("det(Z)", Some(("det(Z)*inv(tp(Z))", "0"))),
        ("det(conj(Z))", Some(("0", "det(conj(Z))*inv(adj(Z))"))),
        ("det(adj(Z)*A*Z)", Some(("det(adj(Z)*A*Z)*inv(tp(Z))", "det(adj(Z)*A*Z)*inv(adj(Z))"))),
        ("det(Z^3)", Some(("3*det(Z)*det(Z)*det(Z)*inv(tp(Z))", "0"))),
    ];
    ensure(rows.len() == 20, || "table must have 20 rows".into())?;
    let cfg = FdConfig::default();
    let mut worst = 0.0f64;
    for (row, (text, expected)) in rows.iter().enumerate() {
        let f = parse(text, &d).map_err(|e| format!("row {}: {e}", row + 1))?;
        let pair = derive_unstructured(&f, "Z", N).map_err(|e| format!("`{text}`: {e}"))?;
        let expected = expected
            .map(|(g, gc)| -> Result<_, String> {
                Ok((parse_matrix(g, &d).map_err(|e| e.to_string())?, parse_matrix(gc, &d).map_err(|e| e.to_string())?))
            })
            .transpose()?;
        for k in 0..10u64 {
            let env = env(random_complex(N, 100 * row as u64 + k), k);
            let (g, gc) = pair.eval(&env).map_err(|e| format!("`{text}`: {e}"))?;
            let (fg, fgc) = fd_wirtinger(&f, &env, "Z", StructureClass::Unstructured, &cfg).map_err(|e| e.to_string())?;
            let err = rel_err(&g, &fg).max(rel_err(&gc, &fgc));
            worst = worst.max(err);
            ensure(err <= 1e-6, || format!("`{text}` point {k}: FD rel err {err:.2e}"))?;
            let (eg, egc) = match &expected {
                Some((eg, egc)) => (eval_matrix(eg, &env).unwrap(), eval_matrix(egc, &env).unwrap()),
                None if row == 0 => (outer(&a, &b), ComplexMatrix::zeros(N)),
                None => (outer(&a.iter().map(|x| x.conj()).collect::<Vec<_>>(), &b), ComplexMatrix::zeros(N)),
            };
            let terr = rel_err(&g, &eg).max(rel_err(&gc, &egc));
            ensure(terr <= 1e-9, || format!("`{text}` point {k}: differs from the table entry by {terr:.2e}"))?;
        }
    }
    Ok(format!("20 rows x 10 points, max FD rel err {worst:.1e}"))
}

fn structure_suite() -> Outcome {
    const N: usize = 3;
    let cfg = FdConfig::default();
    let mut worst = 0.0f64;
    let mut count = 0;
    for class in StructureClass::ALL {
        let d = decls(N, class);
        for text in ["tr(A*Z)", "tr(Z^2)", "frob2(Z)", "tr(Z*A*adj(Z)*B)"] {
            let f = parse(text, &d).map_err(|e| e.to_string())?;
            for k in 0..5u64 {
                let env = env(random_structured(N, class, 50 + k), k);
                let r = grad_check(&f, &env, "Z", &d, &cfg);
                worst = worst.max(r.max_rel_err_dz).max(r.max_rel_err_dzconj);
                count += 1;
                ensure(r.pass, || format!("{class} `{text}` point {k}: {r:?}"))?;
            }
        }
    }
    Ok(format!("{count} checks over 6 classes, max rel err {worst:.1e}"))
}

fn power_lemma() -> Outcome {
    const N: usize = 3;
    let d = decls(N, StructureClass::Unstructured);
    let z = MatrixExpr::var("Z", N);
    let env = env(random_complex(N, 77), 0);
    let cfg = FdConfig::default();
    let mut worst = 0.0f64;
    for k in 1..=4u32 {
        for l in 0..N {
            for m in 0..N {
                let f = parse(&format!("entry(Z^{k}, {l}, {m})"), &d).map_err(|e| e.to_string())?;
                let (fd, _) = fd_wirtinger(&f, &env, "Z", StructureClass::Unstructured, &cfg).map_err(|e| e.to_string())?;
                for i in 0..N {
                    for j in 0..N {
                        let s = power_entry_derivative(&z, k, l, m, i, j).map_err(|e| e.to_string())?;
                        let v = eval_scalar(&s, &env).map_err(|e| e.to_string())?;
                        let r = fd[(i, j)];
                        let err = (v - r).norm() / r.norm().max(1.0);
                        worst = worst.max(err);
                        ensure(err <= 1e-6, || format!("k={k} (l,m)=({l},{m}) (i,j)=({i},{j}): {err:.2e}"))?;
                    }
                }
            }
        }
    }
    Ok(format!("4 powers x 81 index tuples, max rel err {worst:.1e}"))
}

fn quartic_stationary() -> Outcome {
    let d = Decls::new().with(VariableDecl::new("z", 1, StructureClass::Unstructured));
    let f = parse("frob2(z)^2 - frob2(z)", &d).map_err(|e| e.to_string())?;
    let p = Problem::new(f, d.get("z").unwrap().clone(), vec![], Direction::StationaryOnly, BTreeMap::new())
        .map_err(|e| e.to_string())?;
    let run = |x: f64| {
        let opts = SolveOptions { start: Some(ComplexMatrix::from_diag(&[C64::new(x, 0.0)])), ..Default::default() };
        solve_stationary(&p, &opts).map_err(|e| e.to_string())
    };
    let r = run(1.0)?;
    let m1 = r.z_star[(0, 0)].norm();
    ensure(r.converged && (m1 - 0.5f64.sqrt()).abs() <= 1e-6, || format!("from 1: |z| = {m1}"))?;
    let r = run(1e-3)?;
    let m0 = r.z_star[(0, 0)].norm();
    ensure(r.converged && m0 <= 1e-6, || format!("from 1e-3: |z| = {m0}"))?;
    Ok(format!("|z| = {m1:.10} from 1, {m0:.1e} from 1e-3"))
}

fn purity() -> Outcome {
    let mut worst = 0.0f64;
    for n in [2usize, 4, 8] {
        let closed = solve_purity_min(n).map_err(|e| e.to_string())?;
        let p = Problem::purity(n).map_err(|e| e.to_string())?;
        // symbolic stationarity at the closed form
        let pair = derive(&assemble_lagrangian(&p), "R", &p.decls().unwrap()).map_err(|e| e.to_string())?;
        let at = substitute_params(&substitute_var(&pair.d_dz, "R", &closed.z_star), &closed.multipliers);
        let canon = canonicalize_matrix(&at);
        ensure(canon.is_zero(), || format!("N={n}: residual canonicalizes to `{canon}`"))?;
        ensure(closed.multipliers["lam"] == 2.0 / n as f64, || format!("N={n}: lam = {}", closed.multipliers["lam"]))?;
        let target = ComplexMatrix::identity(n).scale_re(1.0 / n as f64);
        for seed in 0..5 {
            let opts = SolveOptions { start: Some(random_density(n, 500 + seed)), ..Default::default() };
            let r = solve_stationary(&p, &opts).map_err(|e| e.to_string())?;
            let dist = r.z_star.sub(&target).frobenius_norm();
            worst = worst.max(dist);
            ensure(dist <= 1e-4, || format!("N={n} start {seed}: |R - I/N| = {dist:.2e}"))?;
        }
    }
    Ok(format!("symbolic residual 0; 15 iterative runs, max |R - I/N|_F {worst:.1e}"))
}

fn max_entropy() -> Outcome {
    let mut worst = 0.0f64;
    for d in [2usize, 3, 4, 8] {
        let log_d = (d as f64).ln();
        let c = solve_max_entropy(d).map_err(|e| e.to_string())?;
        let p = Problem::max_entropy(d).map_err(|e| e.to_string())?;
        let r = solve_stationary(&p, &SolveOptions::default()).map_err(|e| e.to_string())?;
        for (label, v) in [("closed", c.objective_value), ("iterative", r.objective_value)] {
            let err = (v - log_d).abs();
            worst = worst.max(err);
            ensure(err <= 1e-5, || format!("d={d} {label}: H = {v}, log d = {log_d}"))?;
        }
    }
    Ok(format!("d in {{2,3,4,8}}, max |H - log d| {worst:.1e}"))
}

fn gibbs() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let h = random_complex(4, 900 + seed).hermitian_part();
        let (w, _) = h.hermitian_eigh().map_err(|e| e.to_string())?;
        for q in [0.25, 0.5, 0.75] {
            let e = w[0] + q * (w[3] - w[0]);
            let r = solve_gibbs(&h, e).map_err(|e| e.to_string())?;
            let rho = &r.z_star;
            let energy = (rho.matmul(&h).trace().re - e).abs();
            let comm = rho.matmul(&h).sub(&h.matmul(rho)).frobenius_norm();
            worst = worst.max(energy).max(comm);
            ensure(energy <= 1e-10 && comm <= 1e-10 && rho.is_density(1e-10), || {
                format!("H seed {seed}, q={q}: energy err {energy:.2e}, commutator {comm:.2e}")
            })?;
        }
    }
    let h = ComplexMatrix::from_real_diag(&[0.0, 1.0]);
    let e = (-1f64).exp() / (1.0 + (-1f64).exp());
    let beta = solve_gibbs(&h, e).map_err(|e| e.to_string())?.multipliers["beta"];
    ensure((beta - 1.0).abs() <= 1e-8, || format!("two-level: beta = {beta}"))?;
    Ok(format!("30 instances, max residual {worst:.1e}; two-level |beta - 1| {:.1e}", (beta - 1.0).abs()))
}

fn frobenius() -> Outcome {
    // norm only: T = C L / |L|
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let l = random_complex(3, 300 + seed);
        let c = 0.5 + seed as f64;
        let r = solve_frobenius_fit(&l, Some(c), None).map_err(|e| e.to_string())?;
        let expect = l.scale_re(c / l.frobenius_norm());
        let err = r.z_star.sub(&expect).max_abs();
        worst = worst.max(err);
        ensure(err <= 1e-12, || format!("norm-only seed {seed}: {err:.2e}"))?;
        let d = seed as f64 - 2.0;
        let r = solve_frobenius_fit(&l, None, Some(d)).map_err(|e| e.to_string())?;
        let expect = l.sub(&ComplexMatrix::identity(3).scale((l.trace() - C64::new(d, 0.0)) / 3.0));
        let err = r.z_star.sub(&expect).max_abs();
        worst = worst.max(err);
        ensure(err <= 1e-12, || format!("trace-only seed {seed}: {err:.2e}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut plug = 0.0f64;
    for seed in 0..10u64 {
        let n = 2 + (seed as usize % 3);
        let l = random_complex(n, 400 + seed);
        let d: f64 = rng.random_range(-3.0..3.0);
        let c = (d * d / n as f64 + rng.random_range(0.1..4.0)).sqrt();
        let r = solve_frobenius_fit(&l, Some(c), Some(d)).map_err(|e| e.to_string())?;
        let t = &r.z_star;
        let err = (t.frobenius_norm() - c).abs().max((t.trace() - C64::new(d, 0.0)).norm());
        plug = plug.max(err);
        ensure(err <= 1e-10 && r.converged, || format!("instance {seed}: plug-back {err:.2e}, {r:?}"))?;
    }
    Ok(format!("special cases max err {worst:.1e}; 10 two-constraint plug-backs max {plug:.1e}"))
}

// ---------------------------------------------------------------------------

const HOLOMORPHIC: &[&str] =
    &["tr(A*Z)", "tr(Z^2*B)", "det(Z)", "tr(exp(Z))", "tr(A*Z*B*Z)", "entry(Z^3, 0, 1)", "tr(A*inv(Z))", "bil([1, 2i, -0.5], Z, [0.5, -1, 1i])"];
const GENERAL: &[&str] =
    &["frob2(Z)", "tr(Z*A*adj(Z)*B)", "tr(A*conj(Z))", "det(adj(Z)*A*Z)", "tr(Z*A*conj(Z)*B)", "tr(A*tp(Z)*Z)"];

/// Random objective `c1 t1 + c2 t2` over the template pools; returns its
/// text and whether it is holomorphic by construction.
fn generated(rng: &mut ChaCha8Rng, holomorphic_only: bool) -> (String, bool) {
    let pick = |rng: &mut ChaCha8Rng| -> (&str, bool) {
        if holomorphic_only || rng.random_bool(0.5) {
            (HOLOMORPHIC[rng.random_range(0..HOLOMORPHIC.len())], true)
        } else {
            (GENERAL[rng.random_range(0..GENERAL.len())], false)
        }
    };
    let (t1, h1) = pick(rng);
    let (t2, h2) = pick(rng);
    let coef = |rng: &mut ChaCha8Rng| {
        let z = C64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        wirtinger::expr::format_complex(C64::new((z.re * 8.0).round() / 8.0, (z.im * 8.0).round() / 8.0))
    };
    let (c1, c2) = (coef(rng), coef(rng));
    (format!("{c1}*{t1} + {c2}*{t2}"), h1 && h2)
}

fn properties() -> Outcome {
    const N: usize = 3;
    const CASES: u64 = 100;
    let d = decls(N, StructureClass::Unstructured);
    let dh = decls(N, StructureClass::Hermitian);
    let cfg = FdConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = [0.0f64; 4];
    for k in 0..CASES {
        let env = env(random_complex(N, 7000 + k), k);
        let (text, _) = generated(&mut rng, false);

        // conjugate rule: d(f*)/dZ = (df/dZ*)*, d(f*)/dZ* = (df/dZ)*
        let f = parse(&text, &d).map_err(|e| format!("`{text}`: {e}"))?;
        let fc = parse(&format!("conj({text})"), &d).map_err(|e| e.to_string())?;
        let (g, gc) = derive(&f, "Z", &d).and_then(|p| p.eval(&env)).map_err(|e| e.to_string())?;
        let (h, hc) = derive(&fc, "Z", &d).and_then(|p| p.eval(&env)).map_err(|e| e.to_string())?;
        let e0 = rel_err(&h, &gc.conj()).max(rel_err(&hc, &g.conj()));
        worst[0] = worst[0].max(e0);
        ensure(e0 <= 1e-10, || format!("conjugate rule `{text}`: {e0:.2e}"))?;

        // real objective: df/dZ* = (df/dZ)*
        let fr = parse(&format!("{text} + conj({text})"), &d).map_err(|e| e.to_string())?;
        let (r, rc) = derive(&fr, "Z", &d).and_then(|p| p.eval(&env)).map_err(|e| e.to_string())?;
        let e1 = rel_err(&rc, &r.conj());
        worst[1] = worst[1].max(e1);
        ensure(e1 <= 1e-10, || format!("real-objective identity `{text}`: {e1:.2e}"))?;

        // Hermitian index symmetry, confirmed against the structured oracle
        let zh = random_structured(N, StructureClass::Hermitian, 8000 + k);
        let envh = env.clone().bind("Z", zh);
        let frh = parse(&format!("{text} + conj({text})"), &dh).map_err(|e| e.to_string())?;
        let (s, sc) = derive(&frh, "Z", &dh).and_then(|p| p.eval(&envh)).map_err(|e| e.to_string())?;
        let e2 = rel_err(&s, &sc.transpose());
        worst[2] = worst[2].max(e2);
        ensure(e2 <= 1e-12, || format!("Hermitian symmetry `{text}`: {e2:.2e}"))?;
        let check = grad_check(&frh, &envh, "Z", &dh, &cfg);
        ensure(check.pass, || format!("Hermitian oracle `{text}`: {check:?}"))?;

        // holomorphy => vanishing FD d/dZ*
        let (htext, _) = generated(&mut rng, true);
        let fh = parse(&htext, &d).map_err(|e| e.to_string())?;
        ensure(holomorphy_test(&fh, "Z").map_err(|e| e.to_string())?, || format!("`{htext}` not flagged holomorphic"))?;
        // the oracle's truncation error is h^2 f'''/6, so keep inv/det away
        // from singular points by sampling near the identity
        let shifted = random_complex(N, 9000 + k).scale_re(0.3).add(&ComplexMatrix::identity(N));
        let envw = env.clone().bind("Z", shifted);
        let (_, fdc) = fd_wirtinger(&fh, &envw, "Z", StructureClass::Unstructured, &cfg).map_err(|e| e.to_string())?;
        worst[3] = worst[3].max(fdc.max_abs());
        ensure(fdc.max_abs() <= 1e-8, || format!("holomorphic `{htext}`: FD d/dZ* = {:.2e}", fdc.max_abs()))?;
    }
    Ok(format!(
        "{CASES} cases each; conj {:.0e}, real {:.0e}, hermitian {:.0e}, holomorphic FD {:.0e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("derivative identity suite", identity_rows),
        ("structure suite", structure_suite),
        ("power-entry lemma", power_lemma),
        ("stationary points of |z|^4 - |z|^2", quartic_stationary),
        ("purity minimization", purity),
        ("maximum entropy", max_entropy),
        ("gibbs state", gibbs),
        ("frobenius fit", frobenius),
        ("property suite", properties),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} ({secs:.2}s)", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail} ({secs:.2}s)", k + 1);
            }
        }
    }
    println!("acceptance: {}/9 passed in {:.1}s", 9 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
