//! Covariance super-operators `𝒮A = E[XAX*]` and `𝒮*A = E[X*AX]`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::ComplexMatrixJson;
use crate::linalg::{self, avg, c, herm, hermitian_eigen, hs_norm, identity, CMat};
use crate::rng::GaussianStream;

/// Largest dimension for which the dense `n² × n²` matrix of `𝒮` is built.
pub const DENSE_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceForm {
    /// `𝒮A = scale·⟨A⟩·1`.
    Averaging { scale: f64 },
    /// Independent entries with variances `s_ij`; acts on the diagonal only.
    VarianceProfile { s: DMatrix<f64> },
    /// `𝒮A = Σ a_j A a_j*`.
    Kronecker { coefficients: Vec<CMat> },
    /// Covariance `κ[(i,j),(k,l)] = E[x_ij conj(x_kl)]`, pair index `i·n + j`.
    FullTensor { kappa: CMat },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceOperator {
    dimension: usize,
    form: CovarianceForm,
}

/// Perron–Frobenius data of `𝒮` on the positive semidefinite cone.
#[derive(Debug, Clone)]
pub struct PerronData {
    pub rho: f64,
    /// Left eigenmatrix, `𝒮*S1 = ρ S1`, `⟨S1⟩ = 1`.
    pub s1: CMat,
    /// Right eigenmatrix, `𝒮S2 = ρ S2`, `⟨S2⟩ = 1`.
    pub s2: CMat,
    pub residual_right: f64,
    pub residual_left: f64,
    pub collatz_bounds: (f64, f64),
    /// False when an eigenmatrix lies on the boundary of the cone, where the
    /// Collatz–Wielandt interval cannot close; `rho` then comes from the
    /// converged growth rate alone.
    pub certified: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct PerronOptions {
    /// Relative width of the Collatz–Wielandt interval at which to stop.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PerronOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

impl CovarianceOperator {
    pub fn averaging(dimension: usize, scale: f64) -> Result<Self> {
        check_dimension(dimension)?;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidModel(format!(
                "averaging scale must be positive, got {scale}"
            )));
        }
        Ok(Self {
            dimension,
            form: CovarianceForm::Averaging { scale },
        })
    }

    pub fn variance_profile(s: DMatrix<f64>) -> Result<Self> {
        let n = s.nrows();
        check_dimension(n)?;
        if s.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "variance profile must be square, got {}x{}",
                n,
                s.ncols()
            )));
        }
        if let Some(bad) = s.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidModel(format!(
                "variance profile entries must be nonnegative, found {bad}"
            )));
        }
        Ok(Self {
            dimension: n,
            form: CovarianceForm::VarianceProfile { s },
        })
    }

    pub fn kronecker(coefficients: Vec<CMat>) -> Result<Self> {
        let Some(first) = coefficients.first() else {
            return Err(Error::InvalidModel(
                "Kronecker model needs at least one coefficient".into(),
            ));
        };
        let n = first.nrows();
        check_dimension(n)?;
        for (j, a) in coefficients.iter().enumerate() {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::InvalidModel(format!(
                    "coefficient {j} has shape {}x{}, expected {n}x{n}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            if !linalg::is_finite(a) {
                return Err(Error::InvalidModel(format!("coefficient {j} is not finite")));
            }
        }
        Ok(Self {
            dimension: n,
            form: CovarianceForm::Kronecker { coefficients },
        })
    }

    pub fn full_tensor(dimension: usize, kappa: CMat) -> Result<Self> {
        check_dimension(dimension)?;
        let m = dimension * dimension;
        if kappa.nrows() != m || kappa.ncols() != m {
            return Err(Error::InvalidModel(format!(
                "covariance tensor must be {m}x{m} for dimension {dimension}"
            )));
        }
        if !linalg::is_finite(&kappa) {
            return Err(Error::InvalidModel("covariance tensor is not finite".into()));
        }
        let scale = kappa.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
        let asym = (&kappa - kappa.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if asym > 1e-12 * scale {
            return Err(Error::InvalidModel("covariance tensor is not Hermitian".into()));
        }
        let lmin = linalg::hermitian_eigenvalues_large(&kappa)?[0];
        if lmin < -1e-10 * scale {
            return Err(Error::InvalidModel(format!(
                "covariance tensor is not positive semidefinite (eigenvalue {lmin:.3e})"
            )));
        }
        Ok(Self {
            dimension,
            form: CovarianceForm::FullTensor { kappa },
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn form(&self) -> &CovarianceForm {
        &self.form
    }

    /// `𝒮A`, or `𝒮*A` when `adjoint` is set.
    pub fn apply(&self, a: &CMat, adjoint: bool) -> Result<CMat> {
        if a.nrows() != self.dimension || a.ncols() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: if a.nrows() != self.dimension { a.nrows() } else { a.ncols() },
            });
        }
        Ok(self.map(a, adjoint))
    }

    /// Unchecked application used on hot paths.
    pub(crate) fn map(&self, a: &CMat, adjoint: bool) -> CMat {
        let n = self.dimension;
        match &self.form {
            CovarianceForm::Averaging { scale } => linalg::scalar(n, 1.0) * (avg(a) * *scale),
            CovarianceForm::VarianceProfile { s } => {
                let mut out = CMat::zeros(n, n);
                for i in 0..n {
                    let mut acc = Complex64::ZERO;
                    for j in 0..n {
                        let w = if adjoint { s[(j, i)] } else { s[(i, j)] };
                        acc += a[(j, j)] * w;
                    }
                    out[(i, i)] = acc;
                }
                out
            }
            CovarianceForm::Kronecker { coefficients } => {
                let mut out = CMat::zeros(n, n);
                for x in coefficients {
                    if adjoint {
                        out += x.adjoint() * a * x;
                    } else {
                        out += x * a * x.adjoint();
                    }
                }
                out
            }
            CovarianceForm::FullTensor { kappa } => {
                let mut out = CMat::zeros(n, n);
                for p in 0..n {
                    for q in 0..n {
                        let mut acc = Complex64::ZERO;
                        for r in 0..n {
                            for t in 0..n {
                                // 𝒮:  (p,q) = (i,k), sum over (j,l) = (r,t)
                                // 𝒮*: (p,q) = (j,l), sum over (i,k) = (r,t)
                                let w = if adjoint {
                                    kappa[(t * n + q, r * n + p)]
                                } else {
                                    kappa[(p * n + r, q * n + t)]
                                };
                                acc += w * a[(r, t)];
                            }
                        }
                        out[(p, q)] = acc;
                    }
                }
                out
            }
        }
    }

    /// The operator multiplied by `lambda > 0`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let form = match &self.form {
            CovarianceForm::Averaging { scale } => CovarianceForm::Averaging {
                scale: scale * lambda,
            },
            CovarianceForm::VarianceProfile { s } => CovarianceForm::VarianceProfile { s: s * lambda },
            CovarianceForm::Kronecker { coefficients } => {
                let r = c(lambda.sqrt());
                CovarianceForm::Kronecker {
                    coefficients: coefficients.iter().map(|a| a * r).collect(),
                }
            }
            CovarianceForm::FullTensor { kappa } => CovarianceForm::FullTensor {
                kappa: kappa * c(lambda),
            },
        };
        Self {
            dimension: self.dimension,
            form,
        }
    }

    /// Matrix of `𝒮` (or `𝒮*`) on `vec(A)` with row-major index `i·n + j`.
    pub fn dense_matrix(&self, adjoint: bool) -> Result<CMat> {
        let n = self.dimension;
        if n > DENSE_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "dense materialization limited to n <= {DENSE_LIMIT}"
            )));
        }
        let m = n * n;
        let mut out = CMat::zeros(m, m);
        for k in 0..n {
            for l in 0..n {
                let mut e = CMat::zeros(n, n);
                e[(k, l)] = c(1.0);
                let img = self.map(&e, adjoint);
                for i in 0..n {
                    for j in 0..n {
                        out[(i * n + j, k * n + l)] = img[(i, j)];
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn spectral_radius(&self) -> Result<PerronData> {
        self.spectral_radius_with(PerronOptions::default())
    }

    /// Power iteration on the positive cone from the identity, certified by
    /// Collatz–Wielandt quotients.
    pub fn spectral_radius_with(&self, opts: PerronOptions) -> Result<PerronData> {
        let right = self.perron_side(false, opts)?;
        let left = self.perron_side(true, opts)?;
        let lower = right.lower.max(left.lower);
        let upper = right.upper.min(left.upper);
        let certified = right.certified && left.certified;
        let rho = if certified {
            0.5 * (lower + upper)
        } else {
            log::warn!(
                "Perron eigenmatrix on the cone boundary; spectral radius not certified \
                 (interval [{lower:.6e}, {upper:.6e}])"
            );
            0.5 * (right.growth + left.growth)
        };
        let residual_right = hs_norm(&(self.map(&right.x, false) - &right.x * c(rho)));
        let residual_left = hs_norm(&(self.map(&left.x, true) - &left.x * c(rho)));
        Ok(PerronData {
            rho,
            s1: left.x,
            s2: right.x,
            residual_right,
            residual_left,
            collatz_bounds: (lower, upper),
            certified,
            iterations: right.iterations.max(left.iterations),
        })
    }

    fn perron_side(&self, adjoint: bool, opts: PerronOptions) -> Result<PerronSide> {
        let n = self.dimension;
        let mut x = identity(n);
        let mut lower: f64 = 0.0;
        let mut upper = f64::INFINITY;
        for it in 1..=opts.max_iter {
            let y = herm(&self.map(&x, adjoint));
            let t = avg(&y).re;
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::ZeroOperator);
            }
            let (vals, vecs) = hermitian_eigen(&x);
            if vals[0] > 1e-14 * vals[n - 1] {
                let mut w = vecs.clone();
                for k in 0..n {
                    let f = 1.0 / vals[k].sqrt();
                    for r in 0..n {
                        w[(r, k)] *= f;
                    }
                }
                let q = linalg::hermitian_eigenvalues(&(w.adjoint() * &y * &w));
                lower = lower.max(q[0]);
                upper = upper.min(q[n - 1]);
            }
            // ⟨x⟩ = 1 after the first step, so t is the growth rate.
            let growth = t / avg(&x).re;
            let drift = hs_norm(&(&y - &x * c(growth))) / growth;
            let boundary = vals[0] <= 1e-8 * vals[n - 1];
            x = y / c(t);
            let certified = upper - lower <= opts.tol * upper;
            if certified || (boundary && drift <= 1e-2 * opts.tol) {
                return Ok(PerronSide {
                    x,
                    lower,
                    upper,
                    growth,
                    certified,
                    iterations: it,
                });
            }
        }
        Err(Error::NoConvergence {
            what: "Perron power iteration",
            iterations: opts.max_iter,
            residual: (upper - lower) / upper,
        })
    }

    /// Estimates `(c, C)` with `c⟨A⟩ ≤ 𝒮A, 𝒮*A ≤ C⟨A⟩` over probe matrices:
    /// the identity, the coordinate projections, `probes` seeded rank-one
    /// matrices and `probes` seeded full-rank ones.
    pub fn flatness_bounds(&self, probes: usize, seed: u64) -> (f64, f64) {
        let n = self.dimension;
        let mut rng = GaussianStream::new(seed, 0);
        let mut mats = vec![identity(n)];
        for i in 0..n {
            let mut e = CMat::zeros(n, n);
            e[(i, i)] = c(1.0);
            mats.push(e);
        }
        for _ in 0..probes.max(1) {
            let x = CMat::from_fn(n, 1, |_, _| rng.complex_normal());
            mats.push(&x * x.adjoint());
            mats.push(random_psd(n, &mut rng));
        }
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for a in &mats {
            let t = avg(a).re;
            for adjoint in [false, true] {
                let ev = linalg::hermitian_eigenvalues(&(self.map(a, adjoint) / c(t)));
                lo = lo.min(ev[0]);
                hi = hi.max(ev[n - 1]);
            }
        }
        (lo.max(0.0), hi)
    }

    /// Rescales to unit spectral radius; returns the factor `λ = 1/ρ`.
    pub fn normalize(&self) -> Result<(Self, f64)> {
        let rho = self.spectral_radius()?.rho;
        if !(rho > 0.0) {
            return Err(Error::ZeroOperator);
        }
        if (rho - 1.0).abs() <= 1e-12 {
            return Ok((self.clone(), 1.0));
        }
        let lambda = 1.0 / rho;
        Ok((self.scaled(lambda), lambda))
    }

    pub fn to_document(&self) -> ModelDocument {
        let model = match &self.form {
            CovarianceForm::Averaging { scale } => ModelSpec::Averaging { scale: *scale },
            CovarianceForm::VarianceProfile { s } => ModelSpec::VarianceProfile {
                s: (0..s.nrows())
                    .map(|i| (0..s.ncols()).map(|j| s[(i, j)]).collect())
                    .collect(),
            },
            CovarianceForm::Kronecker { coefficients } => ModelSpec::Kronecker {
                coefficients: coefficients.iter().map(ComplexMatrixJson::from_matrix).collect(),
            },
            CovarianceForm::FullTensor { kappa } => ModelSpec::FullTensor {
                kappa: ComplexMatrixJson::from_matrix(kappa),
            },
        };
        ModelDocument {
            model,
            dimension: self.dimension,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        doc.build()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }
}

struct PerronSide {
    x: CMat,
    lower: f64,
    upper: f64,
    growth: f64,
    certified: bool,
    iterations: usize,
}

fn check_dimension(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidModel("dimension must be positive".into()));
    }
    Ok(())
}

/// `G G* / n` for a seeded complex Gaussian `G`.
pub fn random_psd(n: usize, rng: &mut GaussianStream) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| rng.complex_normal());
    herm(&(&g * g.adjoint() / c(n as f64)))
}

/// JSON model document: `{"model": {...}, "dimension": n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub model: ModelSpec,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Averaging {
        #[serde(default = "one")]
        scale: f64,
    },
    VarianceProfile {
        s: Vec<Vec<f64>>,
    },
    Kronecker {
        coefficients: Vec<ComplexMatrixJson>,
    },
    FullTensor {
        kappa: ComplexMatrixJson,
    },
}

fn one() -> f64 {
    1.0
}

impl ModelDocument {
    pub fn build(&self) -> Result<CovarianceOperator> {
        let n = self.dimension;
        check_dimension(n)?;
        let op = match &self.model {
            ModelSpec::Averaging { scale } => CovarianceOperator::averaging(n, *scale)?,
            ModelSpec::VarianceProfile { s } => {
                if s.len() != n || s.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidModel(format!(
                        "variance profile must be {n}x{n}"
                    )));
                }
                CovarianceOperator::variance_profile(DMatrix::from_fn(n, n, |i, j| s[i][j]))?
            }
            ModelSpec::Kronecker { coefficients } => {
                let mats = coefficients
                    .iter()
                    .map(ComplexMatrixJson::to_matrix)
                    .collect::<Result<Vec<_>>>()?;
                let op = CovarianceOperator::kronecker(mats)?;
                if op.dimension != n {
                    return Err(Error::InvalidModel(format!(
                        "coefficients are {0}x{0} but dimension is {n}",
                        op.dimension
                    )));
                }
                op
            }
            ModelSpec::FullTensor { kappa } => {
                CovarianceOperator::full_tensor(n, kappa.to_matrix()?)?
            }
        };
        Ok(op)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag(d: &[f64]) -> CMat {
        linalg::diagonal(d)
    }

    #[test]
    fn averaging_maps_scalar_to_itself() {
        let op = CovarianceOperator::averaging(3, 1.0).unwrap();
        let out = op.apply(&linalg::scalar(3, 2.0), false).unwrap();
        assert!(hs_norm(&(out - linalg::scalar(3, 2.0))) < 1e-15);
    }

    #[test]
    fn kronecker_diagonal_sandwich() {
        let op = CovarianceOperator::kronecker(vec![diag(&[1.0, 2.0])]).unwrap();
        let out = op.apply(&identity(2), false).unwrap();
        assert!(hs_norm(&(out - diag(&[1.0, 4.0]))) < 1e-15);
    }

    #[test]
    fn variance_profile_row_sums() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let op = CovarianceOperator::variance_profile(s).unwrap();
        let out = op.apply(&identity(2), false).unwrap();
        assert!(hs_norm(&(out - diag(&[3.0, 7.0]))) < 1e-15);
        let adj = op.apply(&identity(2), true).unwrap();
        assert!(hs_norm(&(adj - diag(&[4.0, 6.0]))) < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let op = CovarianceOperator::averaging(3, 1.0).unwrap();
        assert!(matches!(
            op.apply(&identity(2), false),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn perron_examples() {
        let p = CovarianceOperator::averaging(4, 1.0).unwrap().spectral_radius().unwrap();
        assert_relative_eq!(p.rho, 1.0, epsilon = 1e-12);
        assert!(hs_norm(&(&p.s1 - identity(4))) < 1e-12);

        let p = CovarianceOperator::kronecker(vec![diag(&[1.0, 2.0])])
            .unwrap()
            .spectral_radius()
            .unwrap();
        assert_relative_eq!(p.rho, 4.0, epsilon = 1e-10);

        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let p = CovarianceOperator::variance_profile(s).unwrap().spectral_radius().unwrap();
        assert_relative_eq!(p.rho, (5.0 + 33f64.sqrt()) / 2.0, epsilon = 1e-10);
        assert!(p.collatz_bounds.0 <= p.rho && p.rho <= p.collatz_bounds.1);
        assert_relative_eq!(avg(&p.s1).re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(avg(&p.s2).re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_operator_is_rejected() {
        let op = CovarianceOperator::kronecker(vec![CMat::zeros(2, 2)]).unwrap();
        assert!(matches!(op.spectral_radius(), Err(Error::ZeroOperator)));
        let op = CovarianceOperator::variance_profile(DMatrix::zeros(3, 3)).unwrap();
        assert!(matches!(op.normalize(), Err(Error::ZeroOperator)));
    }

    #[test]
    fn flatness_examples() {
        let (lo, hi) = CovarianceOperator::averaging(5, 1.0).unwrap().flatness_bounds(4, 1);
        assert_relative_eq!(lo, 1.0, epsilon = 1e-12);
        assert_relative_eq!(hi, 1.0, epsilon = 1e-12);

        let (lo, _) = CovarianceOperator::kronecker(vec![identity(4)])
            .unwrap()
            .flatness_bounds(4, 1);
        assert!(lo < 1e-12);

        let n = 4;
        let s = DMatrix::from_element(n, n, 1.0 / n as f64);
        let (lo, hi) = CovarianceOperator::variance_profile(s).unwrap().flatness_bounds(3, 2);
        assert_relative_eq!(lo, 1.0, epsilon = 1e-12);
        assert_relative_eq!(hi, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn normalize_examples() {
        let (op, l) = CovarianceOperator::averaging(2, 4.0).unwrap().normalize().unwrap();
        assert_relative_eq!(l, 0.25, epsilon = 1e-12);
        match op.form() {
            CovarianceForm::Averaging { scale } => assert_relative_eq!(*scale, 1.0, epsilon = 1e-12),
            _ => unreachable!(),
        }

        let (op, l) = CovarianceOperator::kronecker(vec![diag(&[1.0, 2.0])])
            .unwrap()
            .normalize()
            .unwrap();
        assert_relative_eq!(l, 0.25, epsilon = 1e-10);
        match op.form() {
            CovarianceForm::Kronecker { coefficients } => {
                assert!(hs_norm(&(&coefficients[0] - diag(&[0.5, 1.0]))) < 1e-10)
            }
            _ => unreachable!(),
        }

        let base = CovarianceOperator::averaging(2, 1.0).unwrap();
        let (op, l) = base.normalize().unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(op, base);
    }

    #[test]
    fn json_round_trip_and_rejections() {
        let text = r#"{"model": {"type": "kronecker", "coefficients": [{"re": [[1, 0], [0, 2]], "im": [[0, 0], [0, 0]]}]}, "dimension": 2}"#;
        let op = CovarianceOperator::from_json(text).unwrap();
        let back = CovarianceOperator::from_json(&op.to_json().unwrap()).unwrap();
        assert_eq!(op, back);

        let bad = r#"{"model": {"type": "averaging", "scale": 1, "extra": 3}, "dimension": 2}"#;
        assert!(CovarianceOperator::from_json(bad).is_err());
        let neg = r#"{"model": {"type": "variance_profile", "s": [[1, -1], [1, 1]]}, "dimension": 2}"#;
        assert!(matches!(CovarianceOperator::from_json(neg), Err(Error::InvalidModel(_))));
        let missing = r#"{"dimension": 2}"#;
        assert!(CovarianceOperator::from_json(missing).is_err());
    }

    #[test]
    fn full_tensor_rejects_indefinite_kappa() {
        let mut k = CMat::identity(4, 4);
        k[(0, 0)] = c(-1.0);
        assert!(CovarianceOperator::full_tensor(2, k).is_err());
    }
}
