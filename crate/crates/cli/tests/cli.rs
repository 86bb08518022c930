use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wirtinger::{canonicalize_matrix, parse_matrix, pretty_print_matrix, Decls};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wirtinger"))
}

fn problems() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn derive_table_rows() {
    let o = run(&["derive", "tr(A*Z)", "--decl", "Z 3 unstructured", "--decl", "A 3 unstructured const", "--var", "Z"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "d/dZ: tp(A)\nd/dZ*: 0\n");
    let o = run(&["derive", "tr(R^2)", "--decl", "R 2 hermitian", "--var", "R", "--structure-aware"]);
    assert!(stdout(&o).starts_with("d/dR: 2*tp(R)\n"), "{}", stdout(&o));
    let o = run(&["derive", "tr(conj(Z))", "--decl", "Z 2 unstructured", "--var", "Z"]);
    assert_eq!(stdout(&o), "d/dZ: 0\nd/dZ*: I\n");
}

#[test]
fn derive_output_round_trips() {
    let decls = ["Z 3 unstructured", "A 3 unstructured const", "B 3 unstructured const"];
    let d = Decls::parse(&decls.join("\n")).unwrap();
    for expr in ["tr(Z*A*adj(Z)*B)", "det(Z)", "frob2(Z - A)", "tr(A*Z^3)", "tr(exp(Z))*tr(conj(Z))"] {
        let mut args = vec!["derive", expr, "--var", "Z"];
        for l in &decls {
            args.extend(["--decl", l]);
        }
        let o = run(&args);
        assert_eq!(code(&o), 0, "{expr}");
        for line in stdout(&o).lines() {
            let (_, text) = line.split_once(": ").unwrap();
            let m = parse_matrix(text, &d).unwrap_or_else(|e| panic!("`{text}`: {e}"));
            assert_eq!(pretty_print_matrix(&canonicalize_matrix(&m)), text, "{expr}");
        }
    }
}

#[test]
fn check_examples_pass() {
    let cases: [&[&str]; 3] = [
        &["check", "tr(Z*A*adj(Z)*B)", "--decl", "Z 3 unstructured", "--decl", "A 3 unstructured const", "--decl", "B 3 unstructured const", "--var", "Z", "--points", "10"],
        &["check", "det(Z)", "--decl", "Z 3 unstructured", "--var", "Z", "--points", "10"],
        &["check", "tr(R*log(R))", "--decl", "R 3 hermitian", "--var", "R", "--points", "5"],
    ];
    for args in cases {
        let o = run(args);
        assert_eq!(code(&o), 0, "{}", stdout(&o));
    }
}

#[test]
fn check_failure_exits_1() {
    let o = run(&["check", "tr(exp(Z))", "--decl", "Z 2 unstructured", "--var", "Z", "--tol", "1e-16"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn error_exit_codes() {
    assert_eq!(code(&run(&["derive", "tr(Z +", "--decl", "Z 2 unstructured", "--var", "Z"])), 2);
    assert_eq!(code(&run(&["derive", "tr(Q)", "--decl", "Z 2 unstructured", "--var", "Z"])), 3);
    assert_eq!(code(&run(&["derive", "tr(Z*A)", "--decl", "Z 2 unstructured", "--decl", "A 3 unstructured const", "--var", "Z"])), 3);
}

#[test]
fn eval_with_bound_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let z = dir.path().join("z.txt");
    std::fs::write(&z, "n 2\nre\n1 2\n3 4\nim\n0 1\n0 0\n").unwrap();
    let bind = format!("Z={}", z.display());
    let o = run(&["eval", "tr(Z) + @c", "--decl", "Z 2 unstructured", "--bind", &bind, "--param", "c=0.5"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "value: 5.5 + 0i\n");
}

#[test]
fn optimize_problem_files() {
    for (file, method) in [("purity3.txt", "auto"), ("gibbs2.txt", "closed"), ("entropy2.txt", "iterative"), ("frobenius.txt", "auto"), ("quartic.txt", "auto")] {
        let path = problems().join(file);
        let o = run(&["optimize", path.to_str().unwrap(), "--method", method]);
        assert_eq!(code(&o), 0, "{file}: {}", stdout(&o));
        assert!(stdout(&o).contains("converged: true"));
    }
}

#[test]
fn optimize_report_document() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let path = problems().join("purity3.txt");
    let o = run(&["optimize", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(v["input"].as_str().unwrap().contains("objective tr(R^2)"));
    let r = &v["report"];
    assert_eq!(r["converged"], true);
    assert_eq!(r["method"], "closed_form");
    assert!((r["multipliers"]["lam"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    let z: wirtinger::ComplexMatrix = serde_json::from_value(r["z_star"].clone()).unwrap();
    assert!(z.sub(&wirtinger::ComplexMatrix::identity(3).scale_re(1.0 / 3.0)).max_abs() < 1e-15);
}

#[test]
fn optimize_infeasible_and_nonconvergent() {
    let dir = tempfile::tempdir().unwrap();
    let infeasible = dir.path().join("gibbs.txt");
    std::fs::write(
        &infeasible,
        "variable R 2 hermitian\nconstant H = [0, 0; 0, 1]\nobjective -tr(R*log(R))\n\
         constraint beta: tr(R*H) = 1.5\nconstraint eta: tr(R) = 1\ndirection maximize\nclosed_form gibbs H=H E=1.5\n",
    )
    .unwrap();
    assert_eq!(code(&run(&["optimize", infeasible.to_str().unwrap()])), 4);

    let no_root = dir.path().join("linear.txt");
    std::fs::write(&no_root, "variable z 1 unstructured\nobjective tr(z) + tr(conj(z))\ndirection stationary\n").unwrap();
    assert_eq!(code(&run(&["optimize", no_root.to_str().unwrap()])), 5);

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "variable z 1 unstructured\nobjective tr(z)\n").unwrap();
    assert_eq!(code(&run(&["optimize", bad.to_str().unwrap()])), 3);
}

#[test]
fn demo_is_deterministic() {
    let a = run(&["demo"]);
    let b = run(&["demo", "--seed", "0"]);
    assert_eq!(code(&a), 0, "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.contains("gibbs beta=1"));
    assert!(text.contains("frobenius norm-only"));
    assert!(text.contains("18 of 18 rows within tolerance"));
}
