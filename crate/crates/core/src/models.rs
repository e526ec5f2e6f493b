//! Built-in models used by the test suites and the CLI defaults.
//!
//! All of them are normalized to spectral radius one except
//! [`variance_profile_raw`], which keeps the textbook entries.

use nalgebra::DMatrix;

use crate::covariance::CovarianceOperator;
use crate::error::Result;
use crate::linalg::{self, CMat};
use crate::rng::GaussianStream;

/// Averaging operator `𝒮A = ⟨A⟩·1`: the circular law.
pub fn circular(n: usize) -> CovarianceOperator {
    CovarianceOperator::averaging(n, 1.0).expect("positive dimension")
}

/// The 2×2 profile `[[1, 2], [3, 4]]`, unnormalized (ρ = (5 + √33)/2).
pub fn variance_profile_raw() -> CovarianceOperator {
    let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    CovarianceOperator::variance_profile(s).expect("valid profile")
}

/// The 2×2 profile `[[1, 2], [3, 4]]` scaled to ρ = 1.
pub fn variance_profile_2() -> Result<CovarianceOperator> {
    Ok(variance_profile_raw().normalize()?.0)
}

/// A smooth, non-symmetric 16×16 profile with unequal row and column sums.
pub fn variance_profile_16() -> Result<CovarianceOperator> {
    let n = 16;
    let t = |k: usize| k as f64 / (n - 1) as f64;
    let s = DMatrix::from_fn(n, n, |i, j| {
        0.25 + (1.0 + t(i)) * (2.0 - t(j)) + 0.5 * (std::f64::consts::PI * (t(i) - t(j))).cos().powi(2)
    });
    Ok(CovarianceOperator::variance_profile(s)?.normalize()?.0)
}

/// Two non-commuting coefficients `a_j = D·H_j` at dimension `n`, with `D`
/// a graded diagonal on `[1, 2]` and `H_j` fixed Haar-like unitaries (QR of
/// seeded Gaussian matrices). Scaled to ρ = 1.
pub fn kronecker_pair(n: usize) -> Result<CovarianceOperator> {
    let d: Vec<f64> = (0..n)
        .map(|i| 1.0 + i as f64 / (n.max(2) - 1) as f64)
        .collect();
    let dm = linalg::diagonal(&d);
    let coefficients = (1..=2)
        .map(|seed| {
            let mut rng = GaussianStream::new(seed, 0);
            let g = CMat::from_fn(n, n, |_, _| rng.complex_normal());
            &dm * g.qr().q()
        })
        .collect();
    Ok(CovarianceOperator::kronecker(coefficients)?.normalize()?.0)
}

/// Single diagonal coefficient `diag(1, 2)/2` (ρ = 1). The operator is
/// reducible: the matrix is a direct sum of two scaled Ginibre blocks.
pub fn kronecker_diagonal() -> CovarianceOperator {
    CovarianceOperator::kronecker(vec![linalg::diagonal(&[0.5, 1.0])]).expect("valid coefficient")
}

/// The flat models of the built-in set, with display names.
pub fn builtin_set() -> Result<Vec<(&'static str, CovarianceOperator)>> {
    Ok(vec![
        ("averaging", circular(8)),
        ("variance_profile_2", variance_profile_2()?),
        ("variance_profile_16", variance_profile_16()?),
        ("kronecker_pair_16", kronecker_pair(16)?),
    ])
}
