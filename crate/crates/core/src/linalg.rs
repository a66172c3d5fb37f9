//! Dense complex matrix helpers on top of `nalgebra`.
//!
//! Everything in the crate works on dynamically sized `Complex64` matrices.
//! Hermitian eigendecompositions are always returned in descending eigenvalue
//! order, which is what the beamforming and dual-variable code expects.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Eigenvalue floor used for PSD checks; absorbs round-off.
pub const PSD_FLOOR: f64 = -1e-10;
/// Tolerance for Hermitian symmetry checks.
pub const HERMITIAN_TOL: f64 = 1e-12;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn scaled_identity(n: usize, s: f64) -> CMat {
    CMat::from_diagonal_element(n, n, c(s, 0.0))
}

/// Adds `s` to every diagonal entry in place.
pub fn add_diagonal(m: &mut CMat, s: f64) {
    let n = m.nrows().min(m.ncols());
    for i in 0..n {
        m[(i, i)] += s;
    }
}

pub fn trace(m: &CMat) -> Complex64 {
    m.trace()
}

pub fn fro_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn fro_norm_sqr(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// (M + M^H) / 2.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    m.is_square() && (m - m.adjoint()).iter().all(|z| z.norm() <= tol * (1.0 + fro_norm(m)))
}

/// Hermitian eigendecomposition with eigenvalues sorted in decreasing order.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Unitary matrix whose columns are the matching eigenvectors.
    pub vectors: CMat,
}

pub fn hermitian_eigen(m: &CMat) -> HermitianEigen {
    assert!(m.is_square(), "hermitian_eigen on non-square matrix");
    let n = m.nrows();
    if n == 0 {
        return HermitianEigen {
            values: Vec::new(),
            vectors: zeros(0, 0),
        };
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    HermitianEigen { values, vectors }
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigen(m).values.last().copied().unwrap_or(0.0)
}

pub fn is_psd(m: &CMat) -> bool {
    is_hermitian(m, HERMITIAN_TOL) && min_eigenvalue(m) >= PSD_FLOOR * (1.0 + fro_norm(m))
}

/// Hermitian square root of a PSD matrix, clamping negative round-off
/// eigenvalues to zero.
pub fn hermitian_sqrt(m: &CMat) -> CMat {
    let eig = hermitian_eigen(m);
    let n = m.nrows();
    let mut scaled = eig.vectors.clone();
    for (j, &v) in eig.values.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    &scaled * eig.vectors.adjoint()
}

/// Solves `a x = b` for Hermitian positive definite `a` via Cholesky.
pub fn hpd_solve(a: &CMat, b: &CMat) -> Option<CMat> {
    let chol = hermitian_part(a).cholesky()?;
    let x = chol.solve(b);
    x.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then_some(x)
}

pub fn hpd_inverse(a: &CMat) -> Option<CMat> {
    hpd_solve(a, &identity(a.nrows()))
}

/// Singular values in decreasing order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Moore-Penrose pseudo-inverse; singular values below `rel_tol * s_max`
/// are treated as zero.
pub fn pseudo_inverse(m: &CMat, rel_tol: f64) -> CMat {
    let (r, cl) = m.shape();
    if r == 0 || cl == 0 {
        return zeros(cl, r);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = rel_tol * smax;
    let mut out = zeros(cl, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut && s > 0.0 {
            let vk = v_t.row(k).adjoint();
            let uk = u.column(k).adjoint();
            out += (vk * uk).scale(1.0 / s);
        }
    }
    out
}

/// Circularly-symmetric complex Gaussian draw: real and imaginary parts are
/// independent N(0, variance / 2).
pub fn cn_scalar<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re * s, im * s)
}

/// Matrix with i.i.d. CN(0, variance) entries, drawn in row-major order.
pub fn cn_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> CMat {
    let mut m = zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = cn_scalar(variance, rng);
        }
    }
    m
}

/// Draws `sqrt_cov * w` with `w ~ CN(0, I)`; `sqrt_cov` is any square root
/// of the target covariance.
pub fn cn_vector_with_sqrt<R: Rng + ?Sized>(sqrt_cov: &CMat, rng: &mut R) -> CVec {
    let w = CVec::from_fn(sqrt_cov.ncols(), |_, _| cn_scalar(1.0, rng));
    sqrt_cov * w
}

pub fn block_diagonal(blocks: &[CMat]) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), b.shape()).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

pub fn vstack(blocks: &[CMat]) -> CMat {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        out.view_mut((r0, 0), b.shape()).copy_from(b);
        r0 += b.nrows();
    }
    out
}

pub fn hstack(blocks: &[CMat]) -> CMat {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        out.view_mut((0, c0), b.shape()).copy_from(b);
        c0 += b.ncols();
    }
    out
}

/// Columns of `m` at `indices`, in the given order.
pub fn select_columns(m: &CMat, indices: &[usize]) -> CMat {
    CMat::from_fn(m.nrows(), indices.len(), |i, j| m[(i, indices[j])])
}
