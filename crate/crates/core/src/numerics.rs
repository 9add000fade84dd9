//! Dense symmetric linear algebra: eigendecomposition, pseudoinverse, inertia,
//! Schur complements, checked solves and the Hermitian-to-real embedding.

use std::ops::Index;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Condition bound above which an eliminated block is treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Default relative threshold for discarding eigenvalues in [`pseudo_inverse`].
pub const PINV_RTOL: f64 = 1e-10;

/// Real symmetric matrix. Construction symmetrizes the input.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Builds from a square matrix, replacing each pair by `(a_ij + a_ji) / 2`.
    pub fn new(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "SymMatrix requires a square matrix");
        assert!(m.nrows() >= 1, "SymMatrix requires order >= 1");
        let n = m.nrows();
        let mut s = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        SymMatrix(s)
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self::new(DMatrix::from_fn(n, n, f))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    /// Principal submatrix on `idx`, in the given order.
    pub fn principal(&self, idx: &[usize]) -> SymMatrix {
        SymMatrix(self.block(idx, idx))
    }

    /// Rectangular block with rows `rows` and columns `cols`.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| self.0[(rows[r], cols[c])])
    }

    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.0 * x))
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, ij: (usize, usize)) -> &f64 {
        &self.0[ij]
    }
}

/// Eigenvalue counts by sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inertia {
    pub n_plus: usize,
    pub n_minus: usize,
    pub n_zero: usize,
}

impl Inertia {
    pub fn order(&self) -> usize {
        self.n_plus + self.n_minus + self.n_zero
    }
}

impl std::ops::Add for Inertia {
    type Output = Inertia;
    fn add(self, o: Inertia) -> Inertia {
        Inertia {
            n_plus: self.n_plus + o.n_plus,
            n_minus: self.n_minus + o.n_minus,
            n_zero: self.n_zero + o.n_zero,
        }
    }
}

/// Spectral decomposition with ascending eigenvalues and orthonormal columns.
#[derive(Debug, Clone)]
pub struct EigenDecomp {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomp {
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.amax()
    }

    /// Rebuilds `Q diag(f(λ)) Qᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let q = &self.eigenvectors;
        let d = DMatrix::from_diagonal(&self.eigenvalues.map(f));
        SymMatrix::new(q * d * q.transpose())
    }
}

/// Full eigendecomposition. Eigenvalues ascend; each eigenvector has its first
/// non-negligible entry positive.
pub fn sym_eigen(a: &SymMatrix) -> Result<EigenDecomp> {
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    let n = a.order();
    let eig = a.matrix().clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = DVector::from_fn(n, |k, _| eig.eigenvalues[idx[k]]);
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (k, &src) in idx.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        if let Some(first) = col.iter().copied().find(|v| v.abs() > 1e-12) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
        eigenvectors.set_column(k, &col);
    }
    Ok(EigenDecomp {
        eigenvalues,
        eigenvectors,
    })
}

/// Moore-Penrose pseudoinverse; eigenvalues with `|λ| <= tol·max|λ|` are dropped.
pub fn pseudo_inverse(a: &SymMatrix, tol: f64) -> Result<SymMatrix> {
    let e = sym_eigen(a)?;
    let cut = tol * e.spectral_radius();
    Ok(e.map(|l| if l.abs() > cut { 1.0 / l } else { 0.0 }))
}

/// Default zero threshold `1e-9·max(1, max|λ|)`.
pub fn default_zero_tol(eigenvalues: &DVector<f64>) -> f64 {
    1e-9 * eigenvalues.amax().max(1.0)
}

pub fn inertia_of_spectrum(eigenvalues: &DVector<f64>, tol: f64) -> Inertia {
    let mut out = Inertia {
        n_plus: 0,
        n_minus: 0,
        n_zero: 0,
    };
    for &l in eigenvalues.iter() {
        if l > tol {
            out.n_plus += 1;
        } else if l < -tol {
            out.n_minus += 1;
        } else {
            out.n_zero += 1;
        }
    }
    out
}

/// Inertia with an absolute zero threshold, or the default when `tol` is `None`.
pub fn inertia(a: &SymMatrix, tol: Option<f64>) -> Result<Inertia> {
    let e = sym_eigen(a)?;
    let tol = tol.unwrap_or_else(|| default_zero_tol(&e.eigenvalues));
    Ok(inertia_of_spectrum(&e.eigenvalues, tol))
}

/// Checks that `d` is well conditioned enough to eliminate.
fn check_nonsingular(d: &SymMatrix) -> Result<()> {
    if !d.is_finite() {
        return Err(Error::NonFinite);
    }
    let e = sym_eigen(d)?;
    let big = e.spectral_radius();
    let small = e.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if big == 0.0 || small * CONDITION_LIMIT <= big {
        return Err(Error::SingularBlock(format!(
            "block of order {} has condition estimate {:.3e}",
            d.order(),
            if small == 0.0 { f64::INFINITY } else { big / small }
        )));
    }
    Ok(())
}

/// Solves `D·X = rhs` for a nonsingular symmetric `D` using a pivoted factorization.
pub fn solve_sym(d: &SymMatrix, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_nonsingular(d)?;
    d.matrix()
        .clone()
        .full_piv_lu()
        .solve(rhs)
        .ok_or_else(|| Error::SingularBlock("factorization failed".into()))
}

/// Schur complement of the block not listed in `keep`, returned in `keep` order.
pub fn schur_complement(h: &SymMatrix, keep: &[usize]) -> Result<SymMatrix> {
    let n = h.order();
    let mut mark = vec![false; n];
    for &k in keep {
        if k >= n || mark[k] {
            return Err(Error::InvalidPair(format!("bad keep index {k}")));
        }
        mark[k] = true;
    }
    let drop: Vec<usize> = (0..n).filter(|&i| !mark[i]).collect();
    let a = h.block(keep, keep);
    if drop.is_empty() {
        return Ok(SymMatrix::new(a));
    }
    let b = h.block(keep, &drop);
    let d = h.principal(&drop);
    let x = solve_sym(&d, &b.transpose())?;
    Ok(SymMatrix::new(a - &b * x))
}

/// Embeds a Hermitian matrix as `[[Re H, -Im H], [Im H, Re H]]`.
pub fn hermitian_realify(h: &DMatrix<Complex<f64>>) -> Result<SymMatrix> {
    if !h.is_square() || h.nrows() == 0 {
        return Err(Error::InvalidProblem("Hermitian input must be square and nonempty".into()));
    }
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n = h.nrows();
    let scale = h.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    let dev = (h - h.adjoint()).iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    if dev > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotHermitian(dev));
    }
    Ok(SymMatrix::from_fn(2 * n, |r, c| {
        let z = h[(r % n, c % n)];
        match (r < n, c < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    }))
}
