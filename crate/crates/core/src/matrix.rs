//! Dense complex square matrices and the linear-algebra kernel used by the
//! evaluator: products, LU with partial pivoting, Hermitian and general
//! eigendecompositions, and analytic matrix functions.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::StructureClass;
use crate::C64;

/// Inverses with a 1-norm condition estimate above this are rejected.
pub const MAX_CONDITION: f64 = 1e14;

/// Eigenvalues at or below this are treated as zero by `z log z`.
pub const XLOGX_CLAMP: f64 = 1e-300;

/// Dense `n x n` complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    n: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.n, self.n)?;
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:+.6e}{:+.6e}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n + j]
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major data. Panics if `data.len() != n * n`.
    pub fn from_row_major(n: usize, data: Vec<C64>) -> Self {
        assert!(n >= 1, "matrix dimension must be positive");
        assert_eq!(data.len(), n * n, "row-major data length must be n*n");
        Self { n, data }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self::from_row_major(n, data)
    }

    /// Builds a matrix from separate real and imaginary row arrays.
    pub fn from_re_im(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<Self> {
        let n = re.len();
        if n == 0 || im.len() != n {
            return Err(Error::Input("re/im must be non-empty with equal row counts".into()));
        }
        for row in re.iter().chain(im.iter()) {
            if row.len() != n {
                return Err(Error::Input(format!("expected {n} columns per row, found {}", row.len())));
            }
        }
        Ok(Self::from_fn(n, |i, j| C64::new(re[i][j], im[i][j])))
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_row_major(n, vec![C64::new(0.0, 0.0); n * n])
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, |i, j| if i == j { diag[i] } else { C64::new(0.0, 0.0) })
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let d: Vec<C64> = diag.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_diag(&d)
    }

    /// Matrix with a single one at `(i, j)`.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n);
        m[(i, j)] = C64::new(1.0, 0.0);
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn re(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self[(i, j)].re).collect()).collect()
    }

    pub fn im(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self[(i, j)].im).collect()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    fn check_dim(&self, other: &Self, op: &str) {
        assert_eq!(self.n, other.n, "dimension mismatch in {op}");
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_dim(other, "add");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Self { n: self.n, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check_dim(other, "sub");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self { n: self.n, data }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        self.check_dim(other, "matmul");
        let n = self.n;
        let mut out = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        Self { n, data: out }
    }

    pub fn hadamard(&self, other: &Self) -> Self {
        self.check_dim(other, "hadamard");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Self { n: self.n, data }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self { n: self.n, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn one_norm(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `(M + M^dag) / 2`.
    pub fn hermitian_part(&self) -> Self {
        self.add(&self.adjoint()).scale_re(0.5)
    }

    /// True when `||M - M^dag||_max <= tol * max(1, ||M||_max)`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let scale = self.max_abs().max(1.0);
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in i..self.n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst <= tol * scale
    }

    /// Hermitian, positive semidefinite and unit trace, all within `tol`.
    pub fn is_density(&self, tol: f64) -> bool {
        if !self.is_hermitian(tol) {
            return false;
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return false;
        }
        match self.hermitian_eigh() {
            Ok((vals, _)) => vals.iter().all(|&v| v >= -tol),
            Err(_) => false,
        }
    }

    /// Checks membership in a structure class within an absolute tolerance.
    pub fn in_class(&self, class: StructureClass, tol: f64) -> bool {
        let n = self.n;
        let zero = |z: C64| z.norm() <= tol;
        for i in 0..n {
            for j in 0..n {
                let a = self[(i, j)];
                let b = self[(j, i)];
                let ok = match class {
                    StructureClass::Unstructured => true,
                    StructureClass::Diagonal => i == j || zero(a),
                    StructureClass::Symmetric => zero(a - b),
                    StructureClass::AntiSymmetric => zero(a + b),
                    StructureClass::Hermitian => zero(a - b.conj()),
                    StructureClass::AntiHermitian => zero(a + b.conj()),
                };
                if !ok {
                    return false;
                }
            }
        }
        true
    }

    /// Orthogonal projection onto a structure class.
    pub fn project(&self, class: StructureClass) -> Self {
        let half = 0.5;
        match class {
            StructureClass::Unstructured => self.clone(),
            StructureClass::Diagonal => {
                Self::from_fn(self.n, |i, j| if i == j { self[(i, j)] } else { C64::new(0.0, 0.0) })
            }
            StructureClass::Symmetric => {
                Self::from_fn(self.n, |i, j| (self[(i, j)] + self[(j, i)]) * half)
            }
            StructureClass::AntiSymmetric => {
                Self::from_fn(self.n, |i, j| (self[(i, j)] - self[(j, i)]) * half)
            }
            StructureClass::Hermitian => {
                Self::from_fn(self.n, |i, j| (self[(i, j)] + self[(j, i)].conj()) * half)
            }
            StructureClass::AntiHermitian => {
                Self::from_fn(self.n, |i, j| (self[(i, j)] - self[(j, i)].conj()) * half)
            }
        }
    }

    /// Integer power; negative exponents go through the inverse.
    pub fn pow(&self, k: i64) -> Result<Self> {
        let base = if k < 0 { self.inverse()? } else { self.clone() };
        let mut e = k.unsigned_abs();
        let mut acc = Self::identity(self.n);
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.matmul(&sq);
            }
            e >>= 1;
            if e > 0 {
                sq = sq.matmul(&sq);
            }
        }
        Ok(acc)
    }

    /// LU factorization with partial pivoting. Returns the packed factors,
    /// the row permutation and the permutation sign.
    fn lu(&self) -> (Vec<C64>, Vec<usize>, f64) {
        let n = self.n;
        let mut a = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].norm();
            for i in (k + 1)..n {
                let v = a[i * n + k].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = a[k * n + k];
            if pivot.norm() == 0.0 {
                continue;
            }
            for i in (k + 1)..n {
                let factor = a[i * n + k] / pivot;
                a[i * n + k] = factor;
                for j in (k + 1)..n {
                    let u = a[k * n + j];
                    a[i * n + j] -= factor * u;
                }
            }
        }
        (a, perm, sign)
    }

    /// Determinant by LU with partial pivoting. Near-singular inputs return
    /// whatever value the factorization produces.
    pub fn det(&self) -> C64 {
        let n = self.n;
        let (a, _, sign) = self.lu();
        let mut d = C64::new(sign, 0.0);
        for k in 0..n {
            d *= a[k * n + k];
        }
        d
    }

    /// Inverse via LU. Fails on exact singularity or when the 1-norm
    /// condition estimate exceeds [`MAX_CONDITION`].
    pub fn inverse(&self) -> Result<Self> {
        let n = self.n;
        let (a, perm, _) = self.lu();
        if (0..n).any(|k| a[k * n + k].norm() == 0.0) {
            return Err(Error::Singular { cond: f64::INFINITY });
        }
        let mut inv = Self::zeros(n);
        let mut col = vec![C64::new(0.0, 0.0); n];
        for c in 0..n {
            for i in 0..n {
                col[i] = if perm[i] == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            }
            for i in 0..n {
                let mut s = col[i];
                for j in 0..i {
                    s -= a[i * n + j] * col[j];
                }
                col[i] = s;
            }
            for i in (0..n).rev() {
                let mut s = col[i];
                for j in (i + 1)..n {
                    s -= a[i * n + j] * col[j];
                }
                col[i] = s / a[i * n + i];
            }
            for i in 0..n {
                inv[(i, c)] = col[i];
            }
        }
        let cond = self.one_norm() * inv.one_norm();
        if !cond.is_finite() || cond > MAX_CONDITION {
            return Err(Error::Singular { cond });
        }
        Ok(inv)
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        Self::from_fn(m.nrows(), |i, j| m[(i, j)])
    }

    /// Eigendecomposition `M = U diag(w) U^dag` of the Hermitian part of `M`.
    /// Eigenvalues are returned in ascending order.
    pub fn hermitian_eigh(&self) -> Result<(Vec<f64>, ComplexMatrix)> {
        if !self.is_finite() {
            return Err(Error::NonFinite("eigendecomposition input".into()));
        }
        let eig = self.hermitian_part().to_nalgebra().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let u = Self::from_fn(self.n, |i, j| eig.eigenvectors[(i, order[j])]);
        Ok((vals, u))
    }

    /// Eigendecomposition of a general diagonalizable matrix via the complex
    /// Schur form. Returns eigenvalues and the eigenvector matrix `V`.
    pub fn eig_general(&self) -> Result<(Vec<C64>, ComplexMatrix)> {
        if !self.is_finite() {
            return Err(Error::NonFinite("eigendecomposition input".into()));
        }
        let n = self.n;
        let schur = self
            .to_nalgebra()
            .try_schur(f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Domain("Schur iteration did not converge".into()))?;
        let (q, t) = schur.unpack();
        let vals: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();
        let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut x = DMatrix::<C64>::zeros(n, n);
        for k in 0..n {
            x[(k, k)] = C64::new(1.0, 0.0);
            for i in (0..k).rev() {
                let mut s = C64::new(0.0, 0.0);
                for j in (i + 1)..=k {
                    s += t[(i, j)] * x[(j, k)];
                }
                let mut denom = t[(i, i)] - t[(k, k)];
                if denom.norm() < f64::EPSILON * scale {
                    denom = C64::new(f64::EPSILON * scale, 0.0);
                }
                x[(i, k)] = -s / denom;
            }
            let norm = (0..n).map(|i| x[(i, k)].norm_sqr()).sum::<f64>().sqrt();
            for i in 0..n {
                x[(i, k)] /= norm;
            }
        }
        Ok((vals, Self::from_nalgebra(&(q * x))))
    }

    /// Matrix exponential by scaling and squaring around a Taylor core.
    pub fn expm_series(&self) -> Self {
        let norm = self.one_norm();
        let mut squarings = 0u32;
        if norm > 0.5 {
            squarings = (norm / 0.5).log2().ceil() as u32;
        }
        let scaled = self.scale_re(0.5f64.powi(squarings as i32));
        let mut term = Self::identity(self.n);
        let mut sum = term.clone();
        for k in 1..=30 {
            term = term.matmul(&scaled).scale_re(1.0 / k as f64);
            sum = sum.add(&term);
            if term.max_abs() <= f64::EPSILON * sum.max_abs() * 1e-2 {
                break;
            }
        }
        for _ in 0..squarings {
            sum = sum.matmul(&sum);
        }
        sum
    }

    /// `U diag(f(w)) U^dag` for Hermitian input.
    pub fn hermitian_function(&self, f: impl Fn(f64) -> Result<C64>) -> Result<Self> {
        let (vals, u) = self.hermitian_eigh()?;
        let fv = vals.into_iter().map(f).collect::<Result<Vec<_>>>()?;
        let d = Self::from_diag(&fv);
        Ok(u.matmul(&d).matmul(&u.adjoint()))
    }

    /// `V diag(f(w)) V^{-1}` for diagonalizable input.
    pub fn general_function(&self, f: impl Fn(C64) -> Result<C64>) -> Result<Self> {
        let (vals, v) = self.eig_general()?;
        let fv = vals.into_iter().map(f).collect::<Result<Vec<_>>>()?;
        let vinv = v.inverse()?;
        Ok(v.matmul(&Self::from_diag(&fv)).matmul(&vinv))
    }
}
