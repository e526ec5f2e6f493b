//! Linearization of the Dyson system at a solution.
//!
//! With `P = V₁^{-1/2} U V₂^{-1/2}`, `K₂ = (1+τPP*)^{-1/4}` and
//! `K₁ = (1+τP*P)^{-1/4}` the reduced stability operator factorizes as
//! `ℒ = 𝒱⁻¹(1 − 𝒯ℱ)𝒱` with self-adjoint `𝒯` and `ℱ`. Everything acts on
//! pairs of `n × n` matrices with the scalar product
//! `⟨(A₁,B₁),(A₂,B₂)⟩ = (⟨A₁,A₂⟩ + ⟨B₁,B₂⟩)/2`.

use std::fmt::Write as _;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::covariance::CovarianceOperator;
use crate::dyson::DysonSolution;
use crate::error::{Error, Result};
use crate::krylov::{self, GmresOptions};
use crate::linalg::{self, add_scalar, c, herm, hermitian_eigen, hs_norm, inner, CMat};
use crate::rng::GaussianStream;

/// Eigenvalue floor used when taking roots of `V₁`, `V₂` and `1 + τPP*`.
pub const ROOT_FLOOR: f64 = 1e-14;
/// `build` refuses solutions with `λ_min(V_i) < MIN_CONDITION·λ_max(V_i)`.
pub const MIN_CONDITION: f64 = 1e-10;
/// Largest dimension for which operators are materialized densely.
pub const DENSE_LIMIT: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPair {
    pub first: CMat,
    pub second: CMat,
}

impl MatrixPair {
    pub fn new(first: CMat, second: CMat) -> Self {
        Self { first, second }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(CMat::zeros(n, n), CMat::zeros(n, n))
    }

    /// `E₋ = (1, −1)`.
    pub fn e_minus(n: usize) -> Self {
        Self::new(linalg::identity(n), -linalg::identity(n))
    }

    /// `E₊ = (1, 1)`.
    pub fn e_plus(n: usize) -> Self {
        Self::new(linalg::identity(n), linalg::identity(n))
    }

    pub fn dimension(&self) -> usize {
        self.first.nrows()
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        (inner(&self.first, &other.first) + inner(&self.second, &other.second)) * 0.5
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(&self.first * s, &self.second * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(&self.first + &other.first, &self.second + &other.second)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(&self.first - &other.first, &self.second - &other.second)
    }

    /// Column-major entries of `first` followed by those of `second`.
    pub fn pack(&self) -> Vec<Complex64> {
        self.first.iter().chain(self.second.iter()).copied().collect()
    }

    pub fn unpack(v: &[Complex64], n: usize) -> Self {
        let nn = n * n;
        Self::new(
            CMat::from_column_slice(n, n, &v[..nn]),
            CMat::from_column_slice(n, n, &v[nn..2 * nn]),
        )
    }

    /// Pair with independent standard complex Gaussian entries.
    pub fn random(n: usize, rng: &mut GaussianStream) -> Self {
        let first = CMat::from_fn(n, n, |_, _| rng.complex_normal());
        let second = CMat::from_fn(n, n, |_, _| rng.complex_normal());
        Self::new(first, second)
    }
}

/// Residuals of the structural identities of a bundle.
#[derive(Debug, Clone, Copy)]
pub struct BundleIdentities {
    /// `‖K₂⁴ − √V₁(η+𝒮V₂)√V₁‖` relative to `‖K₂⁴‖`, and the `K₁` analogue.
    pub k2_fourth: f64,
    pub k1_fourth: f64,
    /// `‖ℱK − K‖/‖K‖` with `K = (K₂², K₁²)`; vanishes at `η = 0` only.
    pub kernel_fixed: f64,
    /// `‖𝒯w + w‖/‖w‖` with `w = 𝒱V₋`.
    pub t_minus_one: f64,
}

impl BundleIdentities {
    pub fn max(&self) -> f64 {
        self.k2_fourth
            .max(self.k1_fourth)
            .max(self.kernel_fixed)
            .max(self.t_minus_one)
    }
}

/// Output of [`StabilityBundle::deflated_solve`].
#[derive(Debug, Clone)]
pub struct DeflatedSolve {
    pub x: MatrixPair,
    /// `‖Q(1−ℱ𝒯)x − Q·rhs‖/‖Q·rhs‖`; the projection is a no-op at `η = 0`.
    pub residual: f64,
    pub iterations: usize,
}

/// Top of the spectrum of `ℱ`, from power iteration on `ℱ²`.
#[derive(Debug, Clone)]
pub struct FPerron {
    pub norm: f64,
    /// Normalized positive eigenmatrices with `ℱ(F₁, F₂) = ‖ℱ‖(F₁, F₂)`.
    pub f1: CMat,
    pub f2: CMat,
    pub iterations: usize,
    pub converged: bool,
}

/// Operators that can be materialized densely.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityOperator {
    T,
    F,
    L,
    /// `1 − ℱ𝒯`.
    OneMinusFT,
}

impl StabilityOperator {
    pub fn name(self) -> &'static str {
        match self {
            Self::T => "T",
            Self::F => "F",
            Self::L => "L",
            Self::OneMinusFT => "1-FT",
        }
    }
}

#[derive(Debug, Clone)]
pub struct StabilityBundle {
    op: CovarianceOperator,
    pub tau: f64,
    pub eta: f64,
    pub v1: CMat,
    pub v2: CMat,
    pub u: CMat,
    pub p: CMat,
    pub k1: CMat,
    pub k2: CMat,
    k1_inv: CMat,
    k2_inv: CMat,
    sqrt_v1: CMat,
    sqrt_v2: CMat,
    inv_sqrt_v1: CMat,
    inv_sqrt_v2: CMat,
    f_norm: OnceLock<f64>,
}

fn sandwich(a: &CMat, x: &CMat, b: &CMat) -> CMat {
    a * x * b
}

/// `A X A`.
fn cong(a: &CMat, x: &CMat) -> CMat {
    a * x * a
}

fn pd_roots(v: &CMat, what: &str) -> Result<(CMat, CMat)> {
    let (vals, _) = hermitian_eigen(v);
    let (lo, hi) = (vals[0], *vals.last().expect("nonempty"));
    if !(hi > 0.0) || lo < MIN_CONDITION * hi {
        return Err(Error::NotPositiveDefinite(format!(
            "{what} has eigenvalue ratio {:.3e} below {MIN_CONDITION:.0e} (edge too close)",
            lo / hi
        )));
    }
    let root = linalg::hermitian_fn(v, |x| x.max(ROOT_FLOOR).sqrt());
    let inv_root = linalg::hermitian_fn(v, |x| 1.0 / x.max(ROOT_FLOOR).sqrt());
    Ok((root, inv_root))
}

impl StabilityBundle {
    pub fn build(sol: &DysonSolution, op: &CovarianceOperator) -> Result<Self> {
        let n = op.dimension();
        if sol.dimension() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: sol.dimension(),
            });
        }
        let tau = sol.tau;
        let (sqrt_v1, inv_sqrt_v1) = pd_roots(&sol.v1, "V1")?;
        let (sqrt_v2, inv_sqrt_v2) = pd_roots(&sol.v2, "V2")?;
        let p = &inv_sqrt_v1 * &sol.u * &inv_sqrt_v2;
        let pp = herm(&(&p * p.adjoint()));
        let ptp = herm(&(p.adjoint() * &p));
        let quarter = |m: &CMat, e: f64| {
            linalg::hermitian_fn(&add_scalar(&(m * c(tau)), 1.0), move |x| x.max(ROOT_FLOOR).powf(e))
        };
        Ok(Self {
            op: op.clone(),
            tau,
            eta: sol.eta,
            v1: sol.v1.clone(),
            v2: sol.v2.clone(),
            u: sol.u.clone(),
            k2: quarter(&pp, -0.25),
            k1: quarter(&ptp, -0.25),
            k2_inv: quarter(&pp, 0.25),
            k1_inv: quarter(&ptp, 0.25),
            p,
            sqrt_v1,
            sqrt_v2,
            inv_sqrt_v1,
            inv_sqrt_v2,
            f_norm: OnceLock::new(),
        })
    }

    /// `‖ℱ‖_hs`, which for this self-adjoint operator is its spectral
    /// radius. Computed by power iteration on first use.
    pub fn f_norm(&self) -> f64 {
        *self.f_norm.get_or_init(|| {
            let perron = self.f_perron(1e-13, 200_000);
            if !perron.converged {
                log::warn!(
                    "power iteration for the norm of F did not settle after {} steps",
                    perron.iterations
                );
            }
            perron.norm
        })
    }

    pub fn dimension(&self) -> usize {
        self.v1.nrows()
    }

    pub fn operator(&self) -> &CovarianceOperator {
        &self.op
    }

    fn check(&self, x: &MatrixPair) -> Result<()> {
        let n = self.dimension();
        for m in [&x.first, &x.second] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.nrows(),
                });
            }
        }
        Ok(())
    }

    /// `K = (K₂², K₁²)`, the Perron vector of `ℱ` at `η = 0`.
    pub fn kernel_pair(&self) -> MatrixPair {
        MatrixPair::new(&self.k2 * &self.k2, &self.k1 * &self.k1)
    }

    /// Deflation direction `w = 𝒱V₋ = (K₂², −K₁²)`.
    pub fn deflation_direction(&self) -> MatrixPair {
        MatrixPair::new(&self.k2 * &self.k2, -(&self.k1 * &self.k1))
    }

    pub fn apply_t(&self, x: &MatrixPair) -> Result<MatrixPair> {
        self.check(x)?;
        Ok(self.t(x))
    }

    pub fn apply_f(&self, x: &MatrixPair) -> Result<MatrixPair> {
        self.check(x)?;
        Ok(self.f(x))
    }

    pub fn apply_v(&self, x: &MatrixPair) -> Result<MatrixPair> {
        self.check(x)?;
        Ok(self.v(x))
    }

    pub fn apply_v_inv(&self, x: &MatrixPair) -> Result<MatrixPair> {
        self.check(x)?;
        Ok(self.v_inv(x))
    }

    pub fn apply_l(&self, x: &MatrixPair) -> Result<MatrixPair> {
        self.check(x)?;
        Ok(self.l(x))
    }

    pub fn apply_l_adjoint(&self, x: &MatrixPair) -> Result<MatrixPair> {
        self.check(x)?;
        Ok(self.l_adjoint(x))
    }

    fn t(&self, x: &MatrixPair) -> MatrixPair {
        let (a, b) = (&x.first, &x.second);
        let k1bk1 = cong(&self.k1, b);
        let k2ak2 = cong(&self.k2, a);
        let first = -cong(&self.k2, &k2ak2)
            + cong(&self.k2, &sandwich(&self.p, &k1bk1, &self.p.adjoint())) * c(self.tau);
        let second = cong(&self.k1, &sandwich(&self.p.adjoint(), &k2ak2, &self.p)) * c(self.tau)
            - cong(&self.k1, &k1bk1);
        MatrixPair::new(first, second)
    }

    /// `F̂B = K₂⁻¹√V₁·𝒮(√V₂K₁⁻¹BK₁⁻¹√V₂)·√V₁K₂⁻¹`.
    fn f_hat(&self, b: &CMat) -> CMat {
        let inner = cong(&self.sqrt_v2, &cong(&self.k1_inv, b));
        cong(&self.k2_inv, &cong(&self.sqrt_v1, &self.op.map(&inner, false)))
    }

    /// `F̂*A = K₁⁻¹√V₂·𝒮*(√V₁K₂⁻¹AK₂⁻¹√V₁)·√V₂K₁⁻¹`.
    fn f_hat_adjoint(&self, a: &CMat) -> CMat {
        let inner = cong(&self.sqrt_v1, &cong(&self.k2_inv, a));
        cong(&self.k1_inv, &cong(&self.sqrt_v2, &self.op.map(&inner, true)))
    }

    fn f(&self, x: &MatrixPair) -> MatrixPair {
        MatrixPair::new(self.f_hat(&x.second), self.f_hat_adjoint(&x.first))
    }

    fn v(&self, x: &MatrixPair) -> MatrixPair {
        MatrixPair::new(
            cong(&self.k2, &cong(&self.inv_sqrt_v1, &x.first)),
            cong(&self.k1, &cong(&self.inv_sqrt_v2, &x.second)),
        )
    }

    fn v_inv(&self, x: &MatrixPair) -> MatrixPair {
        MatrixPair::new(
            cong(&self.sqrt_v1, &cong(&self.k2_inv, &x.first)),
            cong(&self.sqrt_v2, &cong(&self.k1_inv, &x.second)),
        )
    }

    fn l(&self, x: &MatrixPair) -> MatrixPair {
        let (a, b) = (&x.first, &x.second);
        let sa = self.op.map(a, true);
        let sb = self.op.map(b, false);
        let t = c(self.tau);
        let first = a - sandwich(&self.u, &sa, &self.u.adjoint()) * t + cong(&self.v1, &sb);
        let second = cong(&self.v2, &sa) + b - sandwich(&self.u.adjoint(), &sb, &self.u) * t;
        MatrixPair::new(first, second)
    }

    fn l_adjoint(&self, x: &MatrixPair) -> MatrixPair {
        let (a, b) = (&x.first, &x.second);
        let t = c(self.tau);
        let first = a - self.op.map(&sandwich(&self.u.adjoint(), a, &self.u), false) * t
            + self.op.map(&cong(&self.v2, b), false);
        let second = b - self.op.map(&sandwich(&self.u, b, &self.u.adjoint()), true) * t
            + self.op.map(&cong(&self.v1, a), true);
        MatrixPair::new(first, second)
    }

    /// `(1 − ℱ𝒯)x`.
    fn one_minus_ft(&self, x: &MatrixPair) -> MatrixPair {
        x.sub(&self.f(&self.t(x)))
    }

    /// Structural identities at this solution.
    pub fn identities(&self) -> BundleIdentities {
        let k2_4 = {
            let k = &self.k2 * &self.k2;
            &k * &k
        };
        let k1_4 = {
            let k = &self.k1 * &self.k1;
            &k * &k
        };
        let a2 = add_scalar(&self.op.map(&self.v2, false), self.eta);
        let a1 = add_scalar(&self.op.map(&self.v1, true), self.eta);
        let rel = |x: &CMat, y: &CMat| hs_norm(&(x - y)) / hs_norm(x).max(f64::MIN_POSITIVE);
        let kp = self.kernel_pair();
        let w = self.deflation_direction();
        BundleIdentities {
            k2_fourth: rel(&k2_4, &cong(&self.sqrt_v1, &a2)),
            k1_fourth: rel(&k1_4, &cong(&self.sqrt_v2, &a1)),
            kernel_fixed: self.f(&kp).sub(&kp).norm() / kp.norm(),
            t_minus_one: self.t(&w).add(&w).norm() / w.norm(),
        }
    }

    /// Largest of `‖ℒx − 𝒱⁻¹(1−𝒯ℱ)𝒱x‖/‖x‖` over `samples` random pairs.
    pub fn factorization_residual(&self, samples: usize, seed: u64) -> f64 {
        let n = self.dimension();
        let mut rng = GaussianStream::new(seed, 0);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let x = MatrixPair::random(n, &mut rng);
            let vx = self.v(&x);
            let rhs = self.v_inv(&vx.sub(&self.t(&self.f(&vx))));
            worst = worst.max(self.l(&x).sub(&rhs).norm() / x.norm());
        }
        worst
    }

    /// Power iteration on `F̂F̂*` started from `K₂²`.
    pub fn f_perron(&self, tol: f64, max_iter: usize) -> FPerron {
        let mut x = &self.k2 * &self.k2;
        x /= c(hs_norm(&x));
        let mut lambda = 0.0;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < max_iter {
            iterations += 1;
            let y = herm(&self.f_hat(&self.f_hat_adjoint(&x)));
            let next = inner(&x, &y).re;
            let ny = hs_norm(&y);
            let resid = hs_norm(&(&y - &x * c(next)));
            x = y / c(ny);
            let settled = (next - lambda).abs() <= tol * next && resid <= tol.sqrt() * 1e-3 * next;
            lambda = next;
            if settled {
                converged = true;
                break;
            }
        }
        let norm = lambda.max(0.0).sqrt();
        let f2 = self.f_hat_adjoint(&x);
        let f2n = hs_norm(&f2);
        FPerron {
            norm,
            f1: x,
            f2: herm(&(f2 / c(f2n))),
            iterations,
            converged,
        }
    }

    /// `1 − ‖ℱ‖` from power iteration and from the closed formula
    /// `η(⟨F₁,K₂⁻¹V₁K₂⁻¹⟩ + ⟨F₂,K₁⁻¹V₂K₁⁻¹⟩)/(2⟨F₊,𝒱V₊⟩)`, in that order.
    pub fn f_gap_two_ways(&self) -> (f64, f64) {
        let fp = self.f_perron(1e-15, 500_000);
        let num = inner(&fp.f1, &cong(&self.k2_inv, &self.v1)).re
            + inner(&fp.f2, &cong(&self.k1_inv, &self.v2)).re;
        let fplus = MatrixPair::new(fp.f1.clone(), fp.f2.clone());
        let vplus = self.v(&MatrixPair::new(self.v1.clone(), self.v2.clone()));
        let den = 2.0 * fplus.inner(&vplus).re;
        (1.0 - fp.norm, self.eta * num / den)
    }

    /// Solves `(1 − ℱ𝒯)x = Q·rhs` for `x ⊥ w`, `w = 𝒱V₋`, with restarted
    /// GMRES on `Q(1−ℱ𝒯)Q + |w⟩⟨w|`, which is invertible and acts as
    /// `1 − ℱ𝒯` on `w^⊥` at `η = 0`.
    pub fn deflated_solve(&self, rhs: &MatrixPair) -> Result<DeflatedSolve> {
        self.check(rhs)?;
        let n = self.dimension();
        let w = self.deflation_direction();
        let wn = w.norm();
        let w = w.scale(c(1.0 / wn));
        let project = |x: &MatrixPair| x.sub(&w.scale(w.inner(x)));
        let along = w.inner(rhs).norm();
        let rn = rhs.norm();
        if rn > 0.0 && along > 1e-8 * rn {
            log::warn!("deflated solve: right-hand side has component {along:.3e} along the deflation direction; projecting");
        }
        let b = project(rhs);
        let bn = b.norm();
        if bn <= 1e-14 * rn {
            return Ok(DeflatedSolve {
                x: MatrixPair::zeros(n),
                residual: 0.0,
                iterations: 0,
            });
        }
        let mut apply = |v: &[Complex64]| -> Vec<Complex64> {
            let x = MatrixPair::unpack(v, n);
            let xp = project(&x);
            let y = project(&self.one_minus_ft(&xp)).add(&w.scale(w.inner(&x)));
            y.pack()
        };
        let sol = krylov::gmres(
            &mut apply,
            &b.pack(),
            None,
            GmresOptions {
                tol: 1e-12,
                restart: 60,
                max_iter: 4000,
            },
        );
        let x = project(&MatrixPair::unpack(&sol.x, n));
        let residual = project(&self.one_minus_ft(&x)).sub(&b).norm() / bn;
        if residual > 1e-9 {
            return Err(Error::SolverStagnation {
                residual,
                iterations: sol.iterations,
            });
        }
        Ok(DeflatedSolve {
            x,
            residual,
            iterations: sol.iterations,
        })
    }

    /// `σ = (‖Y‖² − ‖ℱ𝒯Y‖²)/(πτ)` with `Y` the deflated solution of
    /// `(1 − ℱ𝒯)Y = K`. Meaningful at `η = 0`, `τ > 0`.
    pub fn density(&self) -> Result<(f64, DeflatedSolve)> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "stability density needs tau > 0, got {}",
                self.tau
            )));
        }
        let solve = self.deflated_solve(&self.kernel_pair())?;
        let y = &solve.x;
        let fty = self.f(&self.t(y));
        let sigma = (y.norm().powi(2) - fty.norm().powi(2)) / (std::f64::consts::PI * self.tau);
        Ok((sigma, solve))
    }

    /// Matrix of an operator on packed pairs (see [`MatrixPair::pack`]).
    /// The packing is orthogonal up to the factor `1/(2n)` for the pair
    /// product, so self-adjoint operators give Hermitian matrices.
    pub fn dense(&self, which: StabilityOperator) -> Result<CMat> {
        let n = self.dimension();
        if n > DENSE_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "dense stability operators limited to n <= {DENSE_LIMIT}"
            )));
        }
        let d = 2 * n * n;
        let mut out = CMat::zeros(d, d);
        let mut e = vec![Complex64::ZERO; d];
        for j in 0..d {
            e[j] = Complex64::ONE;
            let x = MatrixPair::unpack(&e, n);
            let y = match which {
                StabilityOperator::T => self.t(&x),
                StabilityOperator::F => self.f(&x),
                StabilityOperator::L => self.l(&x),
                StabilityOperator::OneMinusFT => self.one_minus_ft(&x),
            };
            for (i, v) in y.pack().into_iter().enumerate() {
                out[(i, j)] = v;
            }
            e[j] = Complex64::ZERO;
        }
        Ok(out)
    }

    /// Dense oracle for [`Self::deflated_solve`]: direct LU solve of the
    /// materialized `Q(1−ℱ𝒯)Q + |w⟩⟨w|`.
    pub fn deflated_solve_dense(&self, rhs: &MatrixPair) -> Result<MatrixPair> {
        self.check(rhs)?;
        let n = self.dimension();
        let a = self.dense(StabilityOperator::OneMinusFT)?;
        let w = self.deflation_direction().pack();
        let wn = krylov::norm(&w);
        let w: Vec<Complex64> = w.iter().map(|z| z / wn).collect();
        let d = w.len();
        let q = CMat::from_fn(d, d, |i, j| {
            let delta = if i == j { Complex64::ONE } else { Complex64::ZERO };
            delta - w[i] * w[j].conj()
        });
        let ww = CMat::from_fn(d, d, |i, j| w[i] * w[j].conj());
        let m = &q * a * &q + ww;
        let b = &q * nalgebra::DVector::from_column_slice(&rhs.pack());
        let x = m.lu().solve(&b).ok_or(Error::Singular("deflated stability operator"))?;
        Ok(MatrixPair::unpack(x.as_slice(), n))
    }

    /// `1 − |λ₂|/|λ₁|` for the spectrum of `ℱ`, where `λ₁ = ±‖ℱ‖` and `λ₂`
    /// is the next eigenvalue in modulus. Uses the dense `n² × n²` matrix
    /// of `F̂F̂*`, whose eigenvalues are the squares of those of `ℱ`.
    pub fn f_spectral_gap(&self) -> Result<f64> {
        let n = self.dimension();
        if n > DENSE_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "spectral gap computed densely for n <= {DENSE_LIMIT}"
            )));
        }
        let m = n * n;
        let mut g = CMat::zeros(m, m);
        for j in 0..m {
            let mut e = CMat::zeros(n, n);
            e[(j % n, j / n)] = Complex64::ONE;
            let y = self.f_hat(&self.f_hat_adjoint(&e));
            for (i, v) in y.iter().enumerate() {
                g[(i, j)] = *v;
            }
        }
        let vals = linalg::hermitian_eigenvalues_large(&herm(&g))?;
        let top = vals[m - 1].max(0.0).sqrt();
        let second = if m > 1 { vals[m - 2].max(0.0).sqrt() } else { 0.0 };
        Ok(1.0 - second / top)
    }

    /// Eigenvalues of `𝒯`, `ℱ` and `ℒ` as CSV (`operator,index,re,im`).
    pub fn spectra_csv(&self) -> Result<String> {
        let mut out = String::from("operator,index,re,im\n");
        for which in [StabilityOperator::T, StabilityOperator::F, StabilityOperator::L] {
            let m = self.dense(which)?;
            let mut vals = linalg::eigenvalues(&m)?;
            vals.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            for (k, z) in vals.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{k},{},{}",
                    which.name(),
                    crate::io::fmt_f64(z.re),
                    crate::io::fmt_f64(z.im)
                );
            }
        }
        Ok(out)
    }
}
