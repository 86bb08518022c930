//! Closed-form solutions of the density-operator and Frobenius-fit problems.
//!
//! Every report is assembled by [`finish_report`], so its `grad_residual`
//! is the symbolic stationarity residual evaluated at the closed form.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::C64;

use super::{finish_report, Method, Problem, SolveOptions, SolveReport};

fn closed(p: &Problem, z: ComplexMatrix, multipliers: BTreeMap<String, f64>) -> Result<SolveReport> {
    finish_report(p, z, multipliers, 0, Method::ClosedForm, &SolveOptions::default())
}

fn check_dim(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidProblem("dimension must be at least 1".into()));
    }
    Ok(())
}

/// `min tr(R^2)` s.t. `tr R = 1`: `R = I/n`, `lam = 2/n`.
pub fn solve_purity_min(n: usize) -> Result<SolveReport> {
    check_dim(n)?;
    let p = Problem::purity(n)?;
    let rho = ComplexMatrix::identity(n).scale_re(1.0 / n as f64);
    closed(&p, rho, BTreeMap::from([("lam".into(), 2.0 / n as f64)]))
}

/// `max -tr(R log R)` s.t. `tr R = 1`: `R = I/d`, `lam = log d - 1`.
pub fn solve_max_entropy(d: usize) -> Result<SolveReport> {
    check_dim(d)?;
    let p = Problem::max_entropy(d)?;
    let rho = ComplexMatrix::identity(d).scale_re(1.0 / d as f64);
    closed(&p, rho, BTreeMap::from([("lam".into(), (d as f64).ln() - 1.0)]))
}

/// Boltzmann weights of the spectrum `w` at inverse temperature `beta`,
/// with `log Z`, mean energy and energy variance.
struct Thermal {
    p: Vec<f64>,
    log_z: f64,
    mean: f64,
    var: f64,
}

fn thermal(w: &[f64], beta: f64) -> Thermal {
    let a: Vec<f64> = w.iter().map(|x| -beta * x).collect();
    let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = a.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    let p: Vec<f64> = e.iter().map(|x| x / s).collect();
    let mean: f64 = p.iter().zip(w).map(|(pk, wk)| pk * wk).sum();
    let var: f64 = p.iter().zip(w).map(|(pk, wk)| pk * (wk - mean).powi(2)).sum();
    Thermal { p, log_z: m + s.ln(), mean, var }
}

/// Solves `<H>_beta = e` for `beta` over the whole real line. `g(beta) =
/// <H>_beta - e` is strictly decreasing, so the root is bracketed by
/// doubling away from 0 and then refined by Newton steps (`g' = -Var`)
/// that fall back to bisection when they leave the bracket.
fn find_beta(w: &[f64], e: f64) -> f64 {
    let g = |b: f64| thermal(w, b).mean - e;
    let g0 = g(0.0);
    if g0 == 0.0 {
        return 0.0;
    }
    let dir = if g0 > 0.0 { 1.0 } else { -1.0 };
    let (mut lo, mut hi) = (0.0f64, dir);
    while g(hi) * dir > 0.0 && hi.abs() < 1e300 {
        lo = hi;
        hi *= 2.0;
    }
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    // invariant: g(lo) > 0 > g(hi)
    let mut beta = 0.5 * (lo + hi);
    for _ in 0..400 {
        let t = thermal(w, beta);
        let gb = t.mean - e;
        if gb == 0.0 {
            return beta;
        }
        if gb > 0.0 {
            lo = beta;
        } else {
            hi = beta;
        }
        let newton = if t.var > 0.0 { beta + gb / t.var } else { f64::NAN };
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - beta).abs() <= 1e-16 * beta.abs().max(1.0) || hi - lo <= 1e-16 * beta.abs().max(1.0) {
            return next;
        }
        beta = next;
    }
    beta
}

/// Maximum-entropy state at fixed energy: `R = exp(-beta H) / Z` with
/// multipliers `beta` and `eta = log Z - 1`. Requires Hermitian `H` and
/// `h_min < e < h_max`.
pub fn solve_gibbs(h: &ComplexMatrix, e: f64) -> Result<SolveReport> {
    check_dim(h.n())?;
    if !h.is_finite() || !e.is_finite() {
        return Err(Error::InvalidProblem("Hamiltonian and energy must be finite".into()));
    }
    if !h.is_hermitian(1e-12 * h.max_abs().max(1.0)) {
        return Err(Error::InvalidProblem("Hamiltonian is not Hermitian".into()));
    }
    let p = Problem::gibbs(h, e)?;
    let (w, u) = h.hermitian_part().hermitian_eigh()?;
    let (h_min, h_max) = (w[0], w[w.len() - 1]);
    if !(e > h_min && e < h_max) {
        return Err(Error::Infeasible(format!("energy {e} is outside the open spectral interval ({h_min}, {h_max})")));
    }
    let beta = find_beta(&w, e);
    let t = thermal(&w, beta);
    let rho = u.matmul(&ComplexMatrix::from_real_diag(&t.p)).matmul(&u.adjoint()).hermitian_part();
    closed(&p, rho, BTreeMap::from([("beta".into(), beta), ("eta".into(), t.log_z - 1.0)]))
}

/// `min |T - L|_F^2` subject to `|T|_F = c` and/or `tr T = d`.
///
/// Stationarity of `f - lam (|T|^2 - c^2) - eta_re (Re tr T - d) - eta_im Im tr T`
/// gives `(1 - lam) T = L + k I` with `k = (eta_re + i eta_im)/2`. With
/// `s = 1 - lam` and `L0` the traceless part of `L`, the two constraints
/// yield `T = L0/s + (d/n) I` and `s = |L0| / sqrt(c^2 - d^2/n)`.
pub fn solve_frobenius_fit(l: &ComplexMatrix, c: Option<f64>, d: Option<f64>) -> Result<SolveReport> {
    let n = l.n();
    check_dim(n)?;
    if !l.is_finite() || c.is_some_and(|c| !c.is_finite()) || d.is_some_and(|d| !d.is_finite()) {
        return Err(Error::InvalidProblem("inputs must be finite".into()));
    }
    if let Some(c) = c {
        if c <= 0.0 {
            return Err(Error::InvalidProblem(format!("norm target must be positive, got {c}")));
        }
    }
    let p = Problem::frobenius_fit(l, c, d)?;
    let nf = n as f64;
    let eye = ComplexMatrix::identity(n);
    let tr_l = l.trace();
    let trace_mults = |k: C64| [("eta_re".to_string(), 2.0 * k.re), ("eta_im".to_string(), 2.0 * k.im)];
    let (t, mults): (ComplexMatrix, BTreeMap<String, f64>) = match (c, d) {
        (None, None) => (l.clone(), BTreeMap::new()),
        (Some(c), None) => {
            let norm = l.frobenius_norm();
            if norm == 0.0 {
                // every T on the sphere is optimal; pick C E_00 with lam = 1
                (ComplexMatrix::unit(n, 0, 0).scale_re(c), BTreeMap::from([("lam".into(), 1.0)]))
            } else {
                let s = norm / c;
                (l.scale_re(1.0 / s), BTreeMap::from([("lam".into(), 1.0 - s)]))
            }
        }
        (None, Some(d)) => {
            let k = (C64::new(d, 0.0) - tr_l) / nf;
            (l.add(&eye.scale(k)), BTreeMap::from(trace_mults(k)))
        }
        (Some(c), Some(d)) => {
            let l0 = l.sub(&eye.scale(tr_l / nf));
            let l0_norm = l0.frobenius_norm();
            let slack = c * c - d * d / nf;
            let tol = 1e-12 * (c * c).max(1.0);
            let base = eye.scale_re(d / nf);
            if slack < -tol {
                return Err(Error::Infeasible(format!("|tr T|^2/n = {} exceeds |T|_F^2 = {}", d * d / nf, c * c)));
            }
            if slack <= tol {
                if l0_norm > 0.0 {
                    return Err(Error::Infeasible(
                        "norm and trace targets force T = (D/n) I, where the constraints have no regular multipliers".into(),
                    ));
                }
                let k = (C64::new(d, 0.0) - tr_l) / nf;
                let mut m = BTreeMap::from(trace_mults(k));
                m.insert("lam".into(), 0.0);
                (base, m)
            } else if l0_norm == 0.0 {
                if n == 1 {
                    return Err(Error::Infeasible("a 1x1 T is fixed by its trace".into()));
                }
                // L is a multiple of I: any traceless direction of the right
                // length is optimal; lam = 1 makes the gradient vanish
                let w = ComplexMatrix::unit(n, 0, 1).scale_re(slack.sqrt());
                let k = -tr_l / nf;
                let mut m = BTreeMap::from(trace_mults(k));
                m.insert("lam".into(), 1.0);
                (base.add(&w), m)
            } else {
                let s = l0_norm / slack.sqrt();
                let k = (C64::new(s * d, 0.0) - tr_l) / nf;
                let mut m = BTreeMap::from(trace_mults(k));
                m.insert("lam".into(), 1.0 - s);
                (l0.scale_re(1.0 / s).add(&base), m)
            }
        }
    };
    closed(&p, t, mults)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_complex;

    #[test]
    fn purity_exact() {
        for n in [1, 2, 5] {
            let r = solve_purity_min(n).unwrap();
            assert_eq!(r.grad_residual, 0.0, "n={n}");
            assert!(r.converged);
        }
        assert_eq!(solve_purity_min(2).unwrap().multipliers["lam"], 1.0);
    }

    #[test]
    fn entropy_values() {
        for d in [1usize, 2, 4] {
            let r = solve_max_entropy(d).unwrap();
            assert!((r.objective_value - (d as f64).ln()).abs() < 1e-12);
            assert!(r.grad_residual < 1e-12, "{}", r.grad_residual);
        }
    }

    #[test]
    fn gibbs_two_level() {
        let h = ComplexMatrix::from_real_diag(&[0.0, 1.0]);
        let r = solve_gibbs(&h, 0.5).unwrap();
        assert!(r.multipliers["beta"].abs() < 1e-14);
        let e = 1.0 / (1.0 + std::f64::consts::E);
        let r = solve_gibbs(&h, e).unwrap();
        assert!((r.multipliers["beta"] - 1.0).abs() < 1e-12);
        assert!(r.converged, "{r:?}");
        // negative temperature above the mean
        let r = solve_gibbs(&h, 0.9).unwrap();
        assert!(r.multipliers["beta"] < 0.0);
        assert!(r.constraint_residuals[0].abs() < 1e-12);
    }

    #[test]
    fn gibbs_rejections() {
        let h = ComplexMatrix::from_real_diag(&[0.0, 1.0]);
        assert!(matches!(solve_gibbs(&h, 1.0), Err(Error::Infeasible(_))));
        assert!(matches!(solve_gibbs(&h, -0.1), Err(Error::Infeasible(_))));
        let nh = ComplexMatrix::unit(2, 0, 1);
        assert!(matches!(solve_gibbs(&nh, 0.0), Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn gibbs_extreme_energy() {
        let h = ComplexMatrix::from_real_diag(&[0.0, 1.0, 2.0]);
        let r = solve_gibbs(&h, 1e-6).unwrap();
        assert!(r.constraint_residuals[0].abs() < 1e-10);
        assert!(r.multipliers["beta"] > 10.0);
    }

    #[test]
    fn frobenius_special_cases() {
        let l = ComplexMatrix::from_real_diag(&[1.0, 3.0]);
        let r = solve_frobenius_fit(&l, None, Some(2.0)).unwrap();
        assert!(r.z_star.sub(&ComplexMatrix::from_real_diag(&[0.0, 2.0])).max_abs() < 1e-15);
        assert!(r.converged, "{r:?}");
        let l2 = l.scale_re(2.0 / l.frobenius_norm());
        let r = solve_frobenius_fit(&l2, Some(1.0), None).unwrap();
        assert!(r.z_star.sub(&l2.scale_re(0.5)).max_abs() < 1e-15);
        assert!(r.converged, "{r:?}");
    }

    #[test]
    fn frobenius_both_constraints() {
        let l = ComplexMatrix::from_real_diag(&[1.0, 3.0]);
        // sqrt(2) with trace 2 pins T = I while L is not a multiple of I
        assert!(matches!(solve_frobenius_fit(&l, Some(2f64.sqrt()), Some(2.0)), Err(Error::Infeasible(_))));
        assert!(matches!(solve_frobenius_fit(&l, Some(1.0), Some(2.0)), Err(Error::Infeasible(_))));
        let r = solve_frobenius_fit(&l, Some(2.0), Some(2.0)).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((r.z_star.frobenius_norm() - 2.0).abs() < 1e-12);
        assert!((r.z_star.trace() - C64::new(2.0, 0.0)).norm() < 1e-12);
        for seed in 0..5 {
            let l = random_complex(3, seed);
            let r = solve_frobenius_fit(&l, Some(3.0), Some(-1.0)).unwrap();
            assert!(r.converged, "{r:?}");
            assert!(r.grad_residual < 1e-8);
        }
    }

    #[test]
    fn frobenius_degenerate_l() {
        let l = ComplexMatrix::identity(2);
        let r = solve_frobenius_fit(&l, Some(3.0), Some(2.0)).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(matches!(solve_frobenius_fit(&ComplexMatrix::identity(1), Some(3.0), Some(2.0)), Err(Error::Infeasible(_))));
        assert!(matches!(solve_frobenius_fit(&l, Some(0.0), None), Err(Error::InvalidProblem(_))));
    }
}
