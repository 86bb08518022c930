use std::collections::BTreeMap;

use wirtinger::optimizer::{
    solve_frobenius_fit, solve_gibbs, solve_max_entropy, solve_purity_min, solve_stationary, Direction, Problem,
    SolveOptions,
};
use wirtinger::random::{random_complex, random_density};
use wirtinger::{parse, ComplexMatrix, Decls, StructureClass, VariableDecl, C64};

fn random_hermitian(n: usize, seed: u64) -> ComplexMatrix {
    random_complex(n, seed).hermitian_part()
}

#[test]
fn purity_iterative_matches_closed_form() {
    for n in [2usize, 4, 8] {
        let p = Problem::purity(n).unwrap();
        let closed = solve_purity_min(n).unwrap();
        for seed in 0..3 {
            let opts = SolveOptions { start: Some(random_density(n, 100 + seed)), ..Default::default() };
            let r = solve_stationary(&p, &opts).unwrap();
            assert!(r.converged, "n={n} seed={seed}: {r:?}");
            assert!(r.z_star.sub(&closed.z_star).frobenius_norm() <= 1e-4);
            assert!((r.multipliers["lam"] - 2.0 / n as f64).abs() < 1e-6);
        }
    }
}

#[test]
fn entropy_iterative_matches_closed_form() {
    for d in [2usize, 3, 4, 8] {
        let p = Problem::max_entropy(d).unwrap();
        let r = solve_stationary(&p, &SolveOptions::default()).unwrap();
        assert!(r.converged, "d={d}: {r:?}");
        assert!((r.objective_value - (d as f64).ln()).abs() <= 1e-5);
        let c = solve_max_entropy(d).unwrap();
        assert!(r.z_star.sub(&c.z_star).frobenius_norm() <= 1e-4);
    }
}

#[test]
fn gibbs_iterative_matches_closed_form() {
    for (n, seed) in [(2usize, 1u64), (4, 2), (8, 3)] {
        let h = random_hermitian(n, seed);
        let (w, _) = h.hermitian_eigh().unwrap();
        let e = 0.3 * w[0] + 0.7 * w[n - 1];
        let c = solve_gibbs(&h, e).unwrap();
        assert!(c.converged, "{c:?}");
        let p = Problem::gibbs(&h, e).unwrap();
        let r = solve_stationary(&p, &SolveOptions::default()).unwrap();
        assert!(r.converged, "n={n}: {r:?}");
        assert!(r.z_star.sub(&c.z_star).frobenius_norm() <= 1e-4);
        assert!((r.multipliers["beta"] - c.multipliers["beta"]).abs() < 1e-5);
    }
}

#[test]
fn gibbs_invariants() {
    for seed in 0..10 {
        let h = random_hermitian(4, 40 + seed);
        let (w, _) = h.hermitian_eigh().unwrap();
        let e = 0.5 * (w[0] + w[3]);
        let r = solve_gibbs(&h, e).unwrap();
        let rho = &r.z_star;
        assert!((rho.matmul(&h).trace().re - e).abs() <= 1e-10);
        assert!(rho.matmul(&h).sub(&h.matmul(rho)).frobenius_norm() <= 1e-10);
        assert!(rho.is_density(1e-10));
        // shift invariance
        let shift = (seed as f64) - 4.5;
        let hs = h.add(&ComplexMatrix::identity(4).scale_re(shift));
        let rs = solve_gibbs(&hs, e + shift).unwrap();
        assert!(rs.z_star.sub(rho).frobenius_norm() <= 1e-10);
    }
}

#[test]
fn frobenius_iterative_agrees() {
    let l = random_complex(3, 9);
    let c = solve_frobenius_fit(&l, Some(2.0), Some(1.0)).unwrap();
    let p = Problem::frobenius_fit(&l, Some(2.0), Some(1.0)).unwrap();
    let r = solve_stationary(&p, &SolveOptions::default()).unwrap();
    assert!(r.converged, "{r:?}");
    assert!(r.z_star.sub(&c.z_star).frobenius_norm() <= 1e-4);
}

fn quartic() -> Problem {
    let decls = Decls::new().with(VariableDecl::new("z", 1, StructureClass::Unstructured));
    let f = parse("frob2(z)^2 - frob2(z)", &decls).unwrap();
    Problem::new(f, decls.get("z").unwrap().clone(), vec![], Direction::StationaryOnly, BTreeMap::new()).unwrap()
}

#[test]
fn stationary_only_quartic() {
    let p = quartic();
    let start = |x: f64| SolveOptions { start: Some(ComplexMatrix::from_diag(&[C64::new(x, 0.0)])), ..Default::default() };
    let r = solve_stationary(&p, &start(1.0)).unwrap();
    assert!(r.converged, "{r:?}");
    assert!((r.z_star[(0, 0)].norm() - 0.5f64.sqrt()).abs() <= 1e-6);
    let r = solve_stationary(&p, &start(1e-3)).unwrap();
    assert!(r.converged, "{r:?}");
    assert!(r.z_star[(0, 0)].norm() <= 1e-6);
}

#[test]
fn density_projection_keeps_iterates_valid() {
    let p = Problem::max_entropy(3).unwrap();
    let opts = SolveOptions { project_density: true, seed: 7, ..Default::default() };
    let r = solve_stationary(&p, &opts).unwrap();
    assert!(r.converged, "{r:?}");
    assert!(r.z_star.is_density(1e-8));
}
