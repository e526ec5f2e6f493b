//! Restarted GMRES on complex vectors.

use num_complex::Complex64;

/// Settings for [`gmres`].
#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    /// Relative residual target `‖b − Ax‖ ≤ tol·‖b‖`.
    pub tol: f64,
    /// Krylov dimension between restarts.
    pub restart: usize,
    /// Total operator applications allowed.
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            restart: 60,
            max_iter: 3000,
        }
    }
}

/// Result of a GMRES solve.
#[derive(Debug, Clone)]
pub struct GmresResult {
    pub x: Vec<Complex64>,
    /// Final relative residual, recomputed from scratch.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(y: &mut [Complex64], a: Complex64, x: &[Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Solves `A x = b` starting from `x0` (zero if `None`).
///
/// Arnoldi uses modified Gram–Schmidt with one reorthogonalization pass; the
/// small least-squares problem is updated with complex Givens rotations.
pub fn gmres(
    apply: &mut dyn FnMut(&[Complex64]) -> Vec<Complex64>,
    b: &[Complex64],
    x0: Option<&[Complex64]>,
    opts: GmresOptions,
) -> GmresResult {
    let d = b.len();
    let bnorm = norm(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); d]);
    if bnorm == 0.0 {
        return GmresResult {
            x: vec![Complex64::new(0.0, 0.0); d],
            residual: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let residual_of = |apply: &mut dyn FnMut(&[Complex64]) -> Vec<Complex64>, x: &[Complex64]| {
        let ax = apply(x);
        let r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        r
    };
    let mut iterations = 0;
    let m = opts.restart.max(1);
    loop {
        let r = residual_of(apply, &x);
        let beta = norm(&r);
        if beta <= opts.tol * bnorm || iterations >= opts.max_iter {
            return GmresResult {
                x,
                residual: beta / bnorm,
                iterations,
                converged: beta <= opts.tol * bnorm,
            };
        }
        let mut basis: Vec<Vec<Complex64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut h: Vec<Vec<Complex64>> = Vec::new();
        let mut cs: Vec<(f64, Complex64)> = Vec::new();
        let mut g = vec![Complex64::new(beta, 0.0)];
        let mut k = 0;
        while k < m && iterations < opts.max_iter {
            iterations += 1;
            let mut w = apply(&basis[k]);
            let mut col = vec![Complex64::new(0.0, 0.0); k + 2];
            for _ in 0..2 {
                for (j, q) in basis.iter().enumerate() {
                    let hij = dot(q, &w);
                    col[j] += hij;
                    axpy(&mut w, -hij, q);
                }
            }
            let hn = norm(&w);
            col[k + 1] = Complex64::new(hn, 0.0);
            for (j, &(cj, sj)) in cs.iter().enumerate() {
                let t = cj * col[j] + sj * col[j + 1];
                col[j + 1] = -sj.conj() * col[j] + cj * col[j + 1];
                col[j] = t;
            }
            let (a, bb) = (col[k], col[k + 1]);
            let r = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            let (ck, sk) = if r == 0.0 {
                (1.0, Complex64::new(0.0, 0.0))
            } else if a.norm() == 0.0 {
                (0.0, bb.conj() / bb.norm())
            } else {
                let an = a.norm();
                (an / r, (a / an) * bb.conj() / r)
            };
            col[k] = ck * a + sk * bb;
            col[k + 1] = Complex64::new(0.0, 0.0);
            cs.push((ck, sk));
            let gk = g[k];
            g.push(-sk.conj() * gk);
            g[k] = ck * gk;
            h.push(col);
            k += 1;
            let breakdown = hn <= 1e-14 * beta;
            if g[k].norm() <= opts.tol * bnorm || breakdown {
                break;
            }
            basis.push(w.iter().map(|z| z / hn).collect());
        }
        // Back substitution on the triangular factor.
        let mut y = vec![Complex64::new(0.0, 0.0); k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[j][i] * y[j];
            }
            y[i] = if h[i][i].norm() > 0.0 { s / h[i][i] } else { Complex64::new(0.0, 0.0) };
        }
        for (j, yj) in y.iter().enumerate() {
            axpy(&mut x, *yj, &basis[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn solves_random_complex_system() {
        let n = 40;
        let mut rng = crate::rng::GaussianStream::new(3, 1);
        let a = DMatrix::from_fn(n, n, |i, j| {
            rng.complex_normal() * 0.1 + if i == j { Complex64::new(2.0, 0.5) } else { Complex64::new(0.0, 0.0) }
        });
        let b: Vec<Complex64> = (0..n).map(|_| rng.complex_normal()).collect();
        let mut op = |v: &[Complex64]| (&a * DVector::from_column_slice(v)).as_slice().to_vec();
        let res = gmres(&mut op, &b, None, GmresOptions { restart: 7, ..Default::default() });
        assert!(res.converged, "{res:?}");
        let exact = a.clone().lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let err: f64 = res.x.iter().zip(exact.iter()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "err {err}");
    }
}
