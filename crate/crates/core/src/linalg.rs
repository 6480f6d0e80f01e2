//! Dense complex linear algebra helpers shared by the subspace, algorithm and
//! theory modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Largest entrywise magnitude.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_vec(v: &CVec) -> f64 {
    v.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    m.is_square() && max_abs(&(m - m.adjoint())) <= tol
}

/// `(M + M*) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let h = hermitian_part(m);
    let eig = nalgebra::SymmetricEigen::new(h);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}

pub fn min_hermitian_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

pub fn max_hermitian_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// Eigenvalues of a general complex square matrix from its Schur form.
pub fn eigenvalues(m: &CMat) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::Schur::try_new(m.clone(), 1e-15, 100_000)
        .ok_or(Error::NotConverged { iterations: 100_000 })?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Largest eigenvalue magnitude.
pub fn spectral_radius(m: &CMat) -> Result<f64> {
    Ok(eigenvalues(m)?
        .into_iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm())))
}

/// Induced 2-norm (largest singular value).
pub fn operator_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Singular values, descending.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Block-diagonal matrix from square blocks.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(n, n);
    let mut at = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((at, at), (k, k)).copy_from(b);
        at += k;
    }
    out
}

/// Block-diagonal matrix with `count` copies of `block`.
pub fn repeat_block_diag(block: &CMat, count: usize) -> CMat {
    let k = block.nrows();
    let mut out = CMat::zeros(k * count, k * count);
    for i in 0..count {
        out.view_mut((i * k, i * k), (k, k)).copy_from(block);
    }
    out
}

/// Dense Kronecker product. Only meant for small cross-checks.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Column-major vectorization.
pub fn vectorize(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &CVec, rows: usize, cols: usize) -> CMat {
    CMat::from_column_slice(rows, cols, v.as_slice())
}

fn split(m: &CMat) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

/// `A B` through four real products, which use the optimized real kernel.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    CMat::from_fn(a.nrows(), b.ncols(), |i, j| c(re[(i, j)], im[(i, j)]))
}

/// `A X A*`.
pub fn sandwich(a: &CMat, x: &CMat) -> CMat {
    matmul(&matmul(a, x), &a.adjoint())
}

/// `trace(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> Complex64 {
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Cholesky factor `F` (lower triangular) with `F F* = R`; errors if `R` is
/// not Hermitian positive definite.
pub fn cholesky_factor(r: &CMat) -> Result<CMat> {
    if !is_hermitian(r, 1e-12 * (1.0 + max_abs(r))) {
        return Err(Error::NotPositiveDefinite("matrix is not Hermitian".into()));
    }
    let n = r.nrows();
    let mut f = CMat::zeros(n, n);
    for j in 0..n {
        let mut pivot = r[(j, j)].re;
        for k in 0..j {
            pivot -= f[(j, k)].norm_sqr();
        }
        if !(pivot > 0.0) {
            return Err(Error::NotPositiveDefinite(format!("non-positive pivot {pivot:e} at {j}")));
        }
        let d = pivot.sqrt();
        f[(j, j)] = c(d, 0.0);
        for i in (j + 1)..n {
            let mut acc = r[(i, j)];
            for k in 0..j {
                acc -= f[(i, k)] * f[(j, k)].conj();
            }
            f[(i, j)] = acc / d;
        }
    }
    Ok(f)
}

/// Inverse of a Hermitian positive definite matrix.
pub fn hpd_inverse(r: &CMat) -> Result<CMat> {
    let f = cholesky_factor(&hermitian_part(r))?;
    let n = r.nrows();
    let f_inv = f
        .solve_lower_triangular(&identity(n))
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    Ok(hermitian_part(&(f_inv.adjoint() * f_inv)))
}
