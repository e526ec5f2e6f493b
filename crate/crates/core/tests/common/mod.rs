//! Dense oracles assembled from Kronecker products, independent of the
//! matrix-free code paths.
#![allow(dead_code)]

use dyson_circ::covariance::{CovarianceForm, CovarianceOperator};
use dyson_circ::dyson::DysonSolution;
use dyson_circ::linalg::CMat;
use num_complex::Complex64;

/// Matrix of `X ↦ AXB` on column-major `vec X`.
pub fn lr(a: &CMat, b: &CMat) -> CMat {
    b.transpose().kronecker(a)
}

fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

fn herm_fn(a: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let h = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let e = h.symmetric_eigen();
    let d = CMat::from_diagonal(&e.eigenvalues.map(|x| Complex64::new(f(x), 0.0)));
    &e.eigenvectors * d * e.eigenvectors.adjoint()
}

/// Column-major matrix of `𝒮` (or `𝒮*`), built from the model data.
pub fn covariance_matrix(op: &CovarianceOperator, adjoint: bool) -> CMat {
    let n = op.dimension();
    let m = n * n;
    let idx = |r: usize, c: usize| r + c * n;
    let mut out = CMat::zeros(m, m);
    match op.form() {
        CovarianceForm::Averaging { scale } => {
            for p in 0..n {
                for r in 0..n {
                    out[(idx(p, p), idx(r, r))] = Complex64::new(scale / n as f64, 0.0);
                }
            }
        }
        CovarianceForm::VarianceProfile { s } => {
            for p in 0..n {
                for r in 0..n {
                    let w = if adjoint { s[(r, p)] } else { s[(p, r)] };
                    out[(idx(p, p), idx(r, r))] = Complex64::new(w, 0.0);
                }
            }
        }
        CovarianceForm::Kronecker { coefficients } => {
            for a in coefficients {
                out += if adjoint {
                    lr(&a.adjoint(), a)
                } else {
                    lr(a, &a.adjoint())
                };
            }
        }
        CovarianceForm::FullTensor { kappa } => {
            // E[x_pr conj(x_qt)] feeds (𝒮A)_pq from A_rt; the adjoint swaps roles.
            for p in 0..n {
                for q in 0..n {
                    for r in 0..n {
                        for t in 0..n {
                            out[(idx(p, q), idx(r, t))] = if adjoint {
                                kappa[(t * n + q, r * n + p)]
                            } else {
                                kappa[(p * n + r, q * n + t)]
                            };
                        }
                    }
                }
            }
        }
    }
    out
}

/// Row-major `vec` ordering used by `CovarianceOperator::dense_matrix`.
pub fn to_row_major(a: &CMat, n: usize) -> CMat {
    let perm = |k: usize| (k % n) * n + k / n;
    let m = n * n;
    let mut out = CMat::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            out[(perm(i), perm(j))] = a[(i, j)];
        }
    }
    out
}

fn blocks(b11: &CMat, b12: &CMat, b21: &CMat, b22: &CMat) -> CMat {
    let m = b11.nrows();
    let mut out = CMat::zeros(2 * m, 2 * m);
    out.view_mut((0, 0), (m, m)).copy_from(b11);
    out.view_mut((0, m), (m, m)).copy_from(b12);
    out.view_mut((m, 0), (m, m)).copy_from(b21);
    out.view_mut((m, m), (m, m)).copy_from(b22);
    out
}

/// Dense `𝒯`, `ℱ` and `ℒ` on packed pairs at a Dyson solution.
pub struct DenseStability {
    pub t: CMat,
    pub f: CMat,
    pub l: CMat,
}

impl DenseStability {
    pub fn one_minus_ft(&self) -> CMat {
        eye(self.t.nrows()) - &self.f * &self.t
    }
}

pub fn dense_stability(op: &CovarianceOperator, sol: &DysonSolution) -> DenseStability {
    let n = op.dimension();
    let m = n * n;
    let tau = Complex64::new(sol.tau, 0.0);
    let s = covariance_matrix(op, false);
    let sa = covariance_matrix(op, true);
    let (v1, v2, u) = (&sol.v1, &sol.v2, &sol.u);
    let r1 = herm_fn(v1, f64::sqrt);
    let r2 = herm_fn(v2, f64::sqrt);
    let p = herm_fn(v1, |x| 1.0 / x.sqrt()) * u * herm_fn(v2, |x| 1.0 / x.sqrt());
    let pp = eye(n) + &p * p.adjoint() * tau;
    let ptp = eye(n) + p.adjoint() * &p * tau;
    let k2 = herm_fn(&pp, |x| x.powf(-0.25));
    let k1 = herm_fn(&ptp, |x| x.powf(-0.25));
    let k2i = herm_fn(&pp, |x| x.powf(0.25));
    let k1i = herm_fn(&ptp, |x| x.powf(0.25));

    let k2sq = &k2 * &k2;
    let k1sq = &k1 * &k1;
    let t = blocks(
        &-lr(&k2sq, &k2sq),
        &(lr(&(&k2 * &p * &k1), &(&k1 * p.adjoint() * &k2)) * tau),
        &(lr(&(&k1 * p.adjoint() * &k2), &(&k2 * &p * &k1)) * tau),
        &-lr(&k1sq, &k1sq),
    );
    let f_hat = lr(&(&k2i * &r1), &(&r1 * &k2i)) * &s * lr(&(&r2 * &k1i), &(&k1i * &r2));
    let f_hat_adj = lr(&(&k1i * &r2), &(&r2 * &k1i)) * &sa * lr(&(&r1 * &k2i), &(&k2i * &r1));
    let zero = CMat::zeros(m, m);
    let f = blocks(&zero, &f_hat, &f_hat_adj, &zero);
    let l = blocks(
        &(eye(m) - lr(u, &u.adjoint()) * &sa * tau),
        &(lr(v1, v1) * &s),
        &(lr(v2, v2) * &sa),
        &(eye(m) - lr(&u.adjoint(), u) * &s * tau),
    );
    DenseStability { t, f, l }
}

/// Largest entrywise difference, scaled by the larger entry when above one.
pub fn entry_gap(a: &CMat, b: &CMat) -> f64 {
    let scale = a.iter().chain(b.iter()).map(|z| z.norm()).fold(1.0, f64::max);
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}
