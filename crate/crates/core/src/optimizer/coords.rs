//! Real coordinates of a structure class.
//!
//! Each class is the real span of an orthogonal set of basis matrices `B_k`
//! (e.g. for Hermitian: `E_ii`, `E_ij + E_ji`, `i(E_ij - E_ji)`), so
//! `Z = sum_k theta_k B_k` and `theta_k = Re<B_k, Z> / |B_k|^2`.

use crate::expr::StructureClass;
use crate::matrix::ComplexMatrix;
use crate::C64;

pub(crate) struct Coords {
    n: usize,
    basis: Vec<Vec<(usize, usize, C64)>>,
}

impl Coords {
    pub fn new(n: usize, class: StructureClass) -> Self {
        use StructureClass::*;
        let one = C64::new(1.0, 0.0);
        let i_ = C64::new(0.0, 1.0);
        let mut basis = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let pairs: &[(C64, C64)] = match (class, i.cmp(&j)) {
                    (Unstructured, _) => &[(one, C64::new(0.0, 0.0)), (i_, C64::new(0.0, 0.0))],
                    (Diagonal | Symmetric, std::cmp::Ordering::Equal) => &[(one, C64::new(0.0, 0.0)), (i_, C64::new(0.0, 0.0))],
                    (Hermitian, std::cmp::Ordering::Equal) => &[(one, C64::new(0.0, 0.0))],
                    (AntiHermitian, std::cmp::Ordering::Equal) => &[(i_, C64::new(0.0, 0.0))],
                    (Symmetric, std::cmp::Ordering::Less) => &[(one, one), (i_, i_)],
                    (AntiSymmetric, std::cmp::Ordering::Less) => &[(one, -one), (i_, -i_)],
                    (Hermitian, std::cmp::Ordering::Less) => &[(one, one), (i_, -i_)],
                    (AntiHermitian, std::cmp::Ordering::Less) => &[(one, -one), (i_, i_)],
                    _ => &[],
                };
                for &(a, b) in pairs {
                    let mut entries = vec![(i, j, a)];
                    if i != j && b.norm() > 0.0 {
                        entries.push((j, i, b));
                    }
                    basis.push(entries);
                }
            }
        }
        Self { n, basis }
    }

    pub fn to_matrix(&self, theta: &[f64]) -> ComplexMatrix {
        let mut z = ComplexMatrix::zeros(self.n);
        for (t, b) in theta.iter().zip(&self.basis) {
            for &(i, j, c) in b {
                z[(i, j)] += c * *t;
            }
        }
        z
    }

    /// Orthogonal projection of `z` onto the class, in coordinates.
    pub fn from_matrix(&self, z: &ComplexMatrix) -> Vec<f64> {
        self.basis
            .iter()
            .map(|b| {
                let dot: f64 = b.iter().map(|&(i, j, c)| (c.conj() * z[(i, j)]).re).sum();
                dot / b.len() as f64
            })
            .collect()
    }

    /// `d phi / d theta_k` for real `phi` with unstructured Wirtinger
    /// derivatives `g = d phi/dZ`, `gc = d phi/dZ*`.
    pub fn gradient(&self, g: &ComplexMatrix, gc: &ComplexMatrix) -> Vec<f64> {
        self.basis
            .iter()
            .map(|b| b.iter().map(|&(i, j, c)| (g[(i, j)] * c + gc[(i, j)] * c.conj()).re).sum())
            .collect()
    }
}
