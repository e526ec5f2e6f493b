//! Small dense helpers on complex matrices.
//!
//! Everything here works with the normalized trace `⟨A⟩ = tr(A)/n` and the
//! matching Hilbert–Schmidt product `⟨A, B⟩ = tr(A* B)/n`, so that the
//! identity has unit norm regardless of dimension.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn scalar(n: usize, value: f64) -> CMat {
    CMat::from_diagonal_element(n, n, c(value))
}

pub fn diagonal(values: &[f64]) -> CMat {
    let n = values.len();
    CMat::from_fn(n, n, |i, j| if i == j { c(values[i]) } else { Complex64::ZERO })
}

/// Normalized trace.
pub fn avg(a: &CMat) -> Complex64 {
    a.trace() / a.nrows() as f64
}

/// Normalized Hilbert–Schmidt scalar product, antilinear in the first slot.
pub fn inner(a: &CMat, b: &CMat) -> Complex64 {
    let mut acc = Complex64::ZERO;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.conj() * y;
    }
    acc / a.nrows() as f64
}

pub fn hs_norm(a: &CMat) -> f64 {
    let s: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    (s / a.nrows() as f64).sqrt()
}

/// Hermitian part `(A + A*)/2`.
pub fn herm(a: &CMat) -> CMat {
    (a + a.adjoint()) * c(0.5)
}

pub fn add_scalar(a: &CMat, s: f64) -> CMat {
    let mut out = a.clone();
    for i in 0..a.nrows() {
        out[(i, i)] += s;
    }
    out
}

/// Eigenvalues (ascending) and eigenvectors of the Hermitian part of `a`.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(herm(a));
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(a.nrows(), a.nrows(), |r, k| eig.eigenvectors[(r, idx[k])]);
    (vals, vecs)
}

pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    hermitian_eigen(a).0
}

pub fn min_eigenvalue(a: &CMat) -> f64 {
    hermitian_eigenvalues(a)[0]
}

/// Applies `f` to the spectrum of a Hermitian matrix: `W f(Λ) W*`.
pub fn hermitian_fn(a: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = hermitian_eigen(a);
    let n = a.nrows();
    let mut scaled = vecs.clone();
    for k in 0..n {
        let fk = f(vals[k]);
        for r in 0..n {
            scaled[(r, k)] *= fk;
        }
    }
    herm(&(scaled * vecs.adjoint()))
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
pub fn pd_inverse(a: &CMat, what: &str) -> Result<CMat> {
    match nalgebra::Cholesky::new(herm(a)) {
        Some(ch) => Ok(herm(&ch.inverse())),
        None => Err(Error::NotPositiveDefinite(format!("{what} is not positive definite"))),
    }
}

/// Cholesky-based positive definiteness test.
pub fn is_pd(a: &CMat) -> bool {
    nalgebra::Cholesky::new(herm(a)).is_some()
}

/// General inverse via LU.
pub fn inverse(a: &CMat, what: &'static str) -> Result<CMat> {
    a.clone().try_inverse().ok_or(Error::Singular(what))
}

/// Largest singular value.
pub fn operator_norm(a: &CMat) -> f64 {
    a.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Copies into a faer matrix. The first call pins faer to sequential
/// kernels: parallelism lives at the level of samples and grid points, and
/// sequential kernels keep results independent of the thread count.
pub fn to_faer(a: &CMat) -> faer::Mat<faer::c64> {
    static SEQUENTIAL: std::sync::Once = std::sync::Once::new();
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Eigenvalues of a general complex matrix.
pub fn eigenvalues(a: &CMat) -> Result<Vec<Complex64>> {
    to_faer(a)
        .eigenvalues()
        .map_err(|e| Error::Backend(format!("eigenvalues: {e:?}")))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues_large(a: &CMat) -> Result<Vec<f64>> {
    let mut v = to_faer(a)
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::Backend(format!("hermitian eigenvalues: {e:?}")))?;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Singular values, descending.
pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    let mut v = to_faer(a)
        .singular_values()
        .map_err(|e| Error::Backend(format!("singular values: {e:?}")))?;
    v.sort_by(|x, y| y.total_cmp(x));
    Ok(v)
}

pub fn is_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_trace_and_norm_of_identity() {
        let id = identity(7);
        assert_eq!(avg(&id), c(1.0));
        assert!((hs_norm(&id) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hermitian_square_root_squares_back() {
        let a = CMat::from_row_slice(
            2,
            2,
            &[c(2.0), Complex64::new(0.5, 0.25), Complex64::new(0.5, -0.25), c(1.0)],
        );
        let r = hermitian_fn(&a, f64::sqrt);
        assert!(hs_norm(&(&r * &r - &a)) < 1e-14);
    }

    #[test]
    fn faer_and_nalgebra_agree_on_hermitian_spectrum() {
        let a = CMat::from_fn(5, 5, |i, j| Complex64::new((i + 2 * j) as f64, i as f64 - j as f64));
        let h = herm(&a);
        let x = hermitian_eigenvalues(&h);
        let y = hermitian_eigenvalues_large(&h).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-11);
        }
    }
}
