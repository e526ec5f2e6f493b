//! Seeded finite-n ensembles and the spectral diagnostics run on them.
//!
//! A model of dimension `d` is lifted to size `n = K·d`: variance profiles
//! become block-constant profiles with `K×K` blocks, Kronecker and
//! full-tensor models become `d×d` block matrices with `K×K` Gaussian
//! blocks of variance `1/K`. The averaging model is sampled directly at
//! size `n` with variance `scale/n`. In all cases the lifted covariance
//! operator restricted to `B ⊗ 1` matrices is `𝒮B ⊗ 1`, so the density of
//! the `d`-dimensional model is the prediction for the sampled matrix.
//!
//! Sample `k` uses random stream `k`; entry `e` of the sample sits at a
//! fixed offset of that stream (see [`crate::rng`]).

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceForm, CovarianceOperator, ModelDocument};
use crate::density::{DensityProfile, SigmaMethod};
use crate::dyson::BlockSolution;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, json_hash};
use crate::linalg::{self, c, CMat};
use crate::rng::GaussianStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Real,
    #[default]
    Complex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub model: ModelDocument,
    #[serde(default)]
    pub field: Field,
    pub n: usize,
    pub seed: u64,
    #[serde(default = "one_sample")]
    pub samples: usize,
}

fn one_sample() -> usize {
    1
}

/// Entry layout of a lifted model.
enum Plan {
    Averaging { std: f64 },
    Profile { std: CMat, block: usize },
    Kronecker { coefficients: Vec<CMat>, block: usize },
    Tensor { factor: CMat, d: usize, block: usize },
}

impl EnsembleSpec {
    pub fn operator(&self) -> Result<CovarianceOperator> {
        self.model.build()
    }

    fn plan(&self) -> Result<Plan> {
        let n = self.n;
        if n == 0 {
            return Err(Error::InvalidArgument("matrix dimension n must be positive".into()));
        }
        let op = self.operator()?;
        let d = op.dimension();
        let lift = |what: &str| -> Result<usize> {
            if n % d != 0 {
                return Err(Error::InvalidArgument(format!(
                    "{what} model of dimension {d} cannot be lifted to n = {n}"
                )));
            }
            Ok(n / d)
        };
        Ok(match op.form() {
            CovarianceForm::Averaging { scale } => Plan::Averaging {
                std: (scale / n as f64).sqrt(),
            },
            CovarianceForm::VarianceProfile { s } => {
                let k = lift("variance profile")?;
                Plan::Profile {
                    std: CMat::from_fn(d, d, |i, j| c((s[(i, j)] / k as f64).sqrt())),
                    block: k,
                }
            }
            CovarianceForm::Kronecker { coefficients } => Plan::Kronecker {
                coefficients: coefficients.clone(),
                block: lift("Kronecker")?,
            },
            CovarianceForm::FullTensor { kappa } => {
                let k = lift("full tensor")?;
                Plan::Tensor {
                    factor: psd_factor(kappa)? * c(1.0 / (k as f64).sqrt()),
                    d,
                    block: k,
                }
            }
        })
    }
}

/// `L` with `L L* = κ` from the eigendecomposition; tolerates semidefinite `κ`.
fn psd_factor(kappa: &CMat) -> Result<CMat> {
    let (vals, vecs) = linalg::hermitian_eigen(kappa);
    let top = vals.iter().cloned().fold(0.0, f64::max);
    if let Some(bad) = vals.iter().find(|&&v| v < -1e-10 * top.max(1.0)) {
        return Err(Error::Factorization(format!(
            "covariance has negative eigenvalue {bad:.3e}"
        )));
    }
    let mut out = vecs;
    for (k, v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        for r in 0..out.nrows() {
            out[(r, k)] *= s;
        }
    }
    Ok(out)
}

fn draw(rng: &mut GaussianStream, field: Field) -> Complex64 {
    match field {
        Field::Complex => rng.complex_normal(),
        Field::Real => c(rng.real_normal()),
    }
}

/// Sample `index` of the ensemble.
pub fn sample(spec: &EnsembleSpec, index: u64) -> Result<CMat> {
    let plan = spec.plan()?;
    Ok(sample_with(&plan, spec, index))
}

fn sample_with(plan: &Plan, spec: &EnsembleSpec, index: u64) -> CMat {
    let n = spec.n;
    let mut rng = GaussianStream::new(spec.seed, index);
    match plan {
        Plan::Averaging { std } => {
            let mut x = CMat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    x[(i, j)] = draw(&mut rng, spec.field) * *std;
                }
            }
            x
        }
        Plan::Profile { std, block } => {
            let mut x = CMat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    x[(i, j)] = draw(&mut rng, spec.field) * std[(i / block, j / block)];
                }
            }
            x
        }
        Plan::Kronecker { coefficients, block } => {
            let k = *block;
            let d = n / k;
            let scale = 1.0 / (k as f64).sqrt();
            let mut x = CMat::zeros(n, n);
            for a in coefficients {
                let g = CMat::from_fn(k, k, |_, _| draw(&mut rng, spec.field) * scale);
                for p in 0..d {
                    for q in 0..d {
                        let w = a[(p, q)];
                        if w == Complex64::ZERO {
                            continue;
                        }
                        let mut view = x.view_mut((p * k, q * k), (k, k));
                        view += &g * w;
                    }
                }
            }
            x
        }
        Plan::Tensor { factor, d, block } => {
            let (d, k) = (*d, *block);
            let m = d * d;
            let mut x = CMat::zeros(n, n);
            let mut g = vec![Complex64::ZERO; m];
            for a in 0..k {
                for b in 0..k {
                    for z in g.iter_mut() {
                        *z = draw(&mut rng, spec.field);
                    }
                    for (pair, row) in (0..m).zip(factor.row_iter()) {
                        let y: Complex64 = row.iter().zip(&g).map(|(l, z)| l * z).sum();
                        let (i, j) = (pair / d, pair % d);
                        x[(i * k + a, j * k + b)] = y;
                    }
                }
            }
            x
        }
    }
}

/// All samples of the ensemble, in index order.
pub fn samples(spec: &EnsembleSpec) -> Result<Vec<CMat>> {
    let plan = spec.plan()?;
    Ok((0..spec.samples as u64)
        .into_par_iter()
        .map(|k| sample_with(&plan, spec, k))
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalSpectrum {
    pub eigenvalues: Vec<Complex64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<EnsembleSpec>,
    #[serde(default)]
    pub sample: u64,
}

impl EmpiricalSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im\n");
        for z in &self.eigenvalues {
            out.push_str(&format!("{},{}\n", fmt_f64(z.re), fmt_f64(z.im)));
        }
        out
    }

    pub fn spec_hash(&self) -> Result<Option<String>> {
        self.spec.as_ref().map(json_hash).transpose()
    }
}

pub fn spectrum(x: &CMat) -> Result<EmpiricalSpectrum> {
    if !linalg::is_finite(x) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    Ok(EmpiricalSpectrum {
        eigenvalues: linalg::eigenvalues(x)?,
        spec: None,
        sample: 0,
    })
}

/// Spectrum of sample `index` with its provenance attached.
pub fn sample_spectrum(spec: &EnsembleSpec, index: u64) -> Result<EmpiricalSpectrum> {
    let mut s = spectrum(&sample(spec, index)?)?;
    s.spec = Some(spec.clone());
    s.sample = index;
    Ok(s)
}

/// Chiral matrix `[[0, X − ζ], [(X − ζ)*, 0]]`.
pub fn hermitization(x: &CMat, zeta: Complex64) -> CMat {
    let n = x.nrows();
    let shifted = x - CMat::identity(n, n) * zeta;
    let mut h = CMat::zeros(2 * n, 2 * n);
    h.view_mut((0, n), (n, n)).copy_from(&shifted);
    h.view_mut((n, 0), (n, n)).copy_from(&shifted.adjoint());
    h
}

/// Singular values of `X − ζ`, descending.
pub fn shifted_singular_values(x: &CMat, zeta: Complex64) -> Result<Vec<f64>> {
    let n = x.nrows();
    linalg::singular_values(&(x - CMat::identity(n, n) * zeta))
}

/// Smooth radial bump `f(ζ) = (1 − |ζ−z₀|²/R²)⁴` on the disk `|ζ−z₀| < R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Complex64,
    pub radius: f64,
}

impl Bump {
    pub fn new(center: Complex64, radius: f64) -> Self {
        Self { center, radius }
    }

    fn u(&self, z: Complex64) -> f64 {
        (z - self.center).norm_sqr() / (self.radius * self.radius)
    }

    pub fn value(&self, z: Complex64) -> f64 {
        let u = self.u(z);
        if u >= 1.0 {
            0.0
        } else {
            (1.0 - u).powi(4)
        }
    }

    pub fn laplacian(&self, z: Complex64) -> f64 {
        let u = self.u(z);
        if u >= 1.0 {
            0.0
        } else {
            16.0 / (self.radius * self.radius) * (1.0 - u).powi(2) * (4.0 * u - 1.0)
        }
    }

    /// `∫ f d²ζ`.
    pub fn integral(&self) -> f64 {
        PI * self.radius * self.radius / 5.0
    }

    /// `∫ |Δf| d²ζ`.
    pub fn laplacian_l1(&self) -> f64 {
        27.0 * PI / 8.0
    }

    /// `n^{2α} f(n^α(ζ − ζ₀))`, again a bump.
    pub fn rescaled(&self, zeta0: Complex64, n: usize, alpha: f64) -> ScaledBump {
        ScaledBump {
            base: *self,
            zeta0,
            scale: (n as f64).powf(alpha),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScaledBump {
    base: Bump,
    zeta0: Complex64,
    scale: f64,
}

impl ScaledBump {
    pub fn value(&self, z: Complex64) -> f64 {
        self.scale * self.scale * self.base.value((z - self.zeta0) * self.scale)
    }

    /// Support disk `(center, radius)`.
    pub fn support(&self) -> (Complex64, f64) {
        (self.zeta0 + self.base.center / self.scale, self.base.radius / self.scale)
    }
}

/// Piecewise-linear `σ(τ)` read from a profile; zero outside `[0, ρ)`.
pub fn profile_density(profile: &DensityProfile, tau: f64) -> f64 {
    if tau >= profile.rho || tau < 0.0 {
        return 0.0;
    }
    let pts = &profile.points;
    let k = pts.partition_point(|p| p.tau <= tau);
    if k == 0 {
        return pts[0].sigma;
    }
    let lo = pts[k - 1];
    let (t1, s1) = match pts.get(k) {
        Some(p) => (p.tau, p.sigma),
        None => (profile.rho, profile.jump),
    };
    lo.sigma + (s1 - lo.sigma) * (tau - lo.tau) / (t1 - lo.tau)
}

/// `∫ f(ζ)σ(|ζ|²) d²ζ` over the disk `(center, radius)` by Gauss–Legendre
/// in the radius and the trapezoidal rule in the angle.
pub fn integrate_against_density(
    f: &dyn Fn(Complex64) -> f64,
    center: Complex64,
    radius: f64,
    sigma: &dyn Fn(f64) -> f64,
) -> f64 {
    let (nodes, weights) = gauss_legendre(48);
    let angles = 96;
    let mut total = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        let r = 0.5 * radius * (x + 1.0);
        let mut ring = 0.0;
        for k in 0..angles {
            let th = 2.0 * PI * (k as f64 + 0.5) / angles as f64;
            let z = center + Complex64::from_polar(r, th);
            ring += f(z) * sigma(z.norm_sqr());
        }
        total += w * 0.5 * radius * r * ring * 2.0 * PI / angles as f64;
    }
    total
}

fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GirkoOptions {
    /// Monte Carlo points in the support of `f`.
    pub points: usize,
    pub seed: u64,
    /// Points with `s_min(X − ζ) < cutoff` are redrawn.
    pub cutoff: f64,
    pub max_resample: usize,
}

impl Default for GirkoOptions {
    fn default() -> Self {
        Self {
            points: 64,
            seed: 0,
            cutoff: 1e-12,
            max_resample: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GirkoResult {
    /// `(1/n)Σ f(λᵢ)`.
    pub direct: f64,
    /// `(1/2π)∫Δf(ζ)(1/n)log|det(X − ζ)| d²ζ` by Monte Carlo.
    pub hermitized: f64,
    pub gap: f64,
    pub standard_error: f64,
    pub points: usize,
    pub resampled: usize,
    pub low_confidence: bool,
}

/// Linear statistic of the eigenvalues computed directly and through
/// log-determinants of `X − ζ`.
///
/// The Monte Carlo points are stratified in `|ζ − z₀|²` with a uniform
/// angle. The control variates `Δf·q` for `q ∈ {1, Re ζ, Im ζ, |ζ − z₀|²}`
/// have exactly known integrals (`0, 0, 0, 4∫f`) and are removed by
/// regression.
pub fn girko_statistic(x: &CMat, f: &Bump, opts: &GirkoOptions) -> Result<GirkoResult> {
    let n = x.nrows();
    if opts.points == 0 {
        return Err(Error::InvalidArgument("Girko statistic needs at least one point".into()));
    }
    let ev = linalg::eigenvalues(x)?;
    let direct = ev.iter().map(|z| f.value(*z)).sum::<f64>() / n as f64;
    let m = opts.points;
    let area = PI * f.radius * f.radius;
    let jobs: Vec<Result<([f64; 5], usize)>> = (0..m)
        .into_par_iter()
        .map(|k| {
            let mut rng = GaussianStream::new(opts.seed, k as u64);
            let mut resampled = 0;
            loop {
                let u = (k as f64 + rng.uniform()) / m as f64;
                let th = 2.0 * PI * rng.uniform();
                let z = f.center + Complex64::from_polar(f.radius * u.sqrt(), th);
                let s = shifted_singular_values(x, z)?;
                if s[n - 1] < opts.cutoff {
                    resampled += 1;
                    if resampled > opts.max_resample {
                        return Err(Error::InvalidArgument(format!(
                            "Girko point {k}: X - zeta stayed near-singular after {resampled} draws"
                        )));
                    }
                    continue;
                }
                let logdet = s.iter().map(|v| v.ln()).sum::<f64>() / n as f64;
                let w = area * f.laplacian(z) / (2.0 * PI);
                let q = (z - f.center).norm_sqr();
                return Ok(([w * logdet, w, w * z.re, w * z.im, w * q], resampled));
            }
        })
        .collect();
    let mut cols: [Vec<f64>; 5] = Default::default();
    let mut resampled = 0;
    for j in jobs {
        let (v, r) = j?;
        for (col, x) in cols.iter_mut().zip(v) {
            col.push(x);
        }
        resampled += r;
    }
    let [y, g0, g1, g2, g3] = cols;
    let exact_q = 4.0 * f.integral() / (2.0 * PI);
    let (hermitized, standard_error) = if m >= 12 {
        control_variate(&y, &[(&g0, 0.0), (&g1, 0.0), (&g2, 0.0), (&g3, exact_q)])
    } else {
        let mean = y.iter().sum::<f64>() / m as f64;
        let var = if m > 1 {
            y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64
        } else {
            f64::INFINITY
        };
        (mean, (var / m as f64).sqrt())
    };
    Ok(GirkoResult {
        direct,
        hermitized,
        gap: (direct - hermitized).abs(),
        standard_error,
        points: m,
        resampled,
        low_confidence: m < 16,
    })
}

/// Regression estimator `ȳ − β·(ḡ − E g)` with `β` from least squares.
fn control_variate(y: &[f64], controls: &[(&Vec<f64>, f64)]) -> (f64, f64) {
    let m = y.len();
    let p = controls.len();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / m as f64;
    let ym = mean(y);
    let gm: Vec<f64> = controls.iter().map(|(g, _)| mean(g)).collect();
    let mut a = nalgebra::DMatrix::<f64>::zeros(p, p);
    let mut b = nalgebra::DVector::<f64>::zeros(p);
    for k in 0..m {
        for i in 0..p {
            let gi = controls[i].0[k] - gm[i];
            b[i] += gi * (y[k] - ym);
            for j in 0..p {
                a[(i, j)] += gi * (controls[j].0[k] - gm[j]);
            }
        }
    }
    let beta = a.lu().solve(&b).unwrap_or_else(|| nalgebra::DVector::zeros(p));
    let est = ym - (0..p).map(|i| beta[i] * (gm[i] - controls[i].1)).sum::<f64>();
    let resid: f64 = (0..m)
        .map(|k| {
            let fit: f64 = (0..p).map(|i| beta[i] * (controls[i].0[k] - gm[i])).sum();
            (y[k] - ym - fit).powi(2)
        })
        .sum();
    let dof = (m as f64 - p as f64 - 1.0).max(1.0);
    (est, (resid / dof / m as f64).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutlierCheck {
    pub pass: bool,
    pub max_abs_sq: f64,
    pub bound: f64,
    /// `max|λ|² − (ρ + τ*)`; positive on failure.
    pub excess: f64,
}

pub fn outlier_check(spectrum: &EmpiricalSpectrum, rho: f64, tau_star: f64) -> OutlierCheck {
    let max_abs_sq = spectrum.eigenvalues.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    let bound = rho + tau_star;
    OutlierCheck {
        pass: max_abs_sq <= bound,
        max_abs_sq,
        bound,
        excess: max_abs_sq - bound,
    }
}

/// `⟨G⟩` for `G = (H_ζ − iη)⁻¹`, from the spectrum of `H_ζ`.
pub fn resolvent_trace(x: &CMat, zeta: Complex64, eta: f64) -> Result<Complex64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    let vals = linalg::hermitian_eigenvalues_large(&hermitization(x, zeta))?;
    Ok(vals
        .iter()
        .map(|l| Complex64::new(1.0, 0.0) / Complex64::new(*l, -eta))
        .sum::<Complex64>()
        / vals.len() as f64)
}

/// `|⟨G − M⟩|` with `G = (H_ζ − iη)⁻¹`.
pub fn resolvent_check(x: &CMat, zeta: Complex64, eta: f64, m: &BlockSolution) -> Result<f64> {
    Ok((resolvent_trace(x, zeta, eta)? - m.avg()).norm())
}

/// Eigenvalues of `H_ζ` in `[−η, η]`, i.e. twice the singular values of
/// `X − ζ` not exceeding `η`.
pub fn small_singular_count(x: &CMat, zeta: Complex64, eta: f64) -> Result<usize> {
    Ok(2 * shifted_singular_values(x, zeta)?.iter().filter(|s| **s <= eta).count())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelocalizationReport {
    pub max_overlap: f64,
    pub threshold: f64,
    pub pass: bool,
    pub eigenvectors: usize,
    pub probes: usize,
}

/// Largest `|⟨v, u⟩|/(‖v‖‖u‖)` over right eigenvectors `u` with
/// `|λ|² ≤ ρ − τ*` and probes `v` (the coordinate basis plus `probes`
/// seeded Gaussian vectors), against `n^{−1/2+ε}`.
pub fn delocalization_check(
    x: &CMat,
    rho: f64,
    tau_star: f64,
    probes: usize,
    seed: u64,
    epsilon: f64,
) -> Result<DelocalizationReport> {
    if probes == 0 {
        return Err(Error::InvalidArgument("delocalization check needs probes".into()));
    }
    let n = x.nrows();
    let eig = linalg::to_faer(x)
        .eigen()
        .map_err(|e| Error::Backend(format!("eigenvectors: {e:?}")))?;
    let vals = eig.S();
    let vecs = eig.U();
    let mut rng = GaussianStream::new(seed, 0);
    let mut probe_mat = CMat::from_fn(probes, n, |_, _| rng.complex_normal());
    for mut row in probe_mat.row_iter_mut() {
        let norm = row.norm();
        row /= c(norm);
    }
    let mut max_overlap: f64 = 0.0;
    let mut count = 0;
    for k in 0..n {
        let lambda = vals[k];
        if lambda.norm_sqr() > rho - tau_star {
            continue;
        }
        count += 1;
        let u = CMat::from_fn(n, 1, |i, _| vecs[(i, k)]);
        let norm = u.norm();
        let coord = u.iter().map(|z| z.norm()).fold(0.0, f64::max) / norm;
        let random = (&probe_mat.map(|z| z.conj()) * &u)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
            / norm;
        max_overlap = max_overlap.max(coord).max(random);
    }
    let threshold = (n as f64).powf(-0.5 + epsilon);
    Ok(DelocalizationReport {
        max_overlap,
        threshold,
        pass: max_overlap <= threshold,
        eigenvectors: count,
        probes: n + probes,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SingularGuard {
    pub s_min: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// `s_min(X − ζ) > exp(−n^ε)`.
pub fn smallest_singular_guard(x: &CMat, zeta: Complex64, eps: f64) -> Result<SingularGuard> {
    let n = x.nrows();
    let s = shifted_singular_values(x, zeta)?;
    let s_min = s[n - 1];
    let threshold = (-(n as f64).powf(eps)).exp();
    Ok(SingularGuard {
        s_min,
        threshold,
        pass: s_min > threshold,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalWindow {
    pub empirical: f64,
    pub predicted: f64,
    pub gap: f64,
    /// `n^{−1+2α}‖Δf‖₁`.
    pub scale: f64,
}

/// Compares `(1/n)Σ f_{ζ₀,α}(λᵢ)` with `∫ f_{ζ₀,α} σ`.
pub fn local_window_statistic(
    spectrum: &EmpiricalSpectrum,
    profile: &DensityProfile,
    zeta0: Complex64,
    alpha: f64,
    f: &Bump,
    tau_star: f64,
) -> Result<LocalWindow> {
    if !(0.0..0.5).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1/2), got {alpha}")));
    }
    let n = spectrum.len();
    let g = f.rescaled(zeta0, n, alpha);
    let (center, radius) = g.support();
    let reach = center.norm() + radius;
    if reach * reach > profile.rho - tau_star {
        return Err(Error::InvalidArgument(format!(
            "window of radius {radius:.3e} around {zeta0} exits the bulk"
        )));
    }
    let empirical = spectrum.eigenvalues.iter().map(|z| g.value(*z)).sum::<f64>() / n as f64;
    let predicted = integrate_against_density(&|z| g.value(z), center, radius, &|t| {
        profile_density(profile, t)
    });
    Ok(LocalWindow {
        empirical,
        predicted,
        gap: (empirical - predicted).abs(),
        scale: (n as f64).powf(-1.0 + 2.0 * alpha) * f.laplacian_l1(),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KsResult {
    pub distance: f64,
    /// Asymptotic 1% critical value `1.628/√n`.
    pub critical: f64,
    pub pass: bool,
}

/// Kolmogorov distance between the empirical law of `samples` and the CDF `cdf`.
pub fn kolmogorov_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max)
}

fn ks(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let distance = kolmogorov_distance(samples, cdf);
    let critical = 1.628 / (samples.len() as f64).sqrt();
    KsResult {
        distance,
        critical,
        pass: distance <= critical,
    }
}

/// Uniformity of `arg λ` on `(−π, π]`.
pub fn angular_uniformity(spectrum: &EmpiricalSpectrum) -> KsResult {
    let args: Vec<f64> = spectrum.eigenvalues.iter().map(|z| z.arg()).collect();
    ks(&args, |t| (t + PI) / (2.0 * PI))
}

/// Kolmogorov distance of `|λ|` to the radial law `F(r) = π∫₀^{r²} σ`,
/// read from a profile.
pub fn radial_distance(spectrum: &EmpiricalSpectrum, profile: &DensityProfile) -> KsResult {
    let mut xs = vec![0.0];
    let mut cum = vec![0.0];
    let mut prev = (0.0, profile.points.first().map_or(profile.jump, |p| p.sigma));
    let mut acc = 0.0;
    let tail = std::iter::once((profile.rho, profile.jump));
    for (t, s) in profile.points.iter().map(|p| (p.tau, p.sigma)).chain(tail) {
        if t > prev.0 {
            acc += PI * 0.5 * (t - prev.0) * (s + prev.1);
            xs.push(t);
            cum.push(acc);
        }
        prev = (t, s);
    }
    let total = acc;
    let cdf = |r: f64| {
        let t = r * r;
        if t >= profile.rho {
            return 1.0;
        }
        let k = xs.partition_point(|x| *x <= t).max(1);
        let (t0, t1) = (xs[k - 1], xs[k]);
        (cum[k - 1] + (cum[k] - cum[k - 1]) * (t - t0) / (t1 - t0)) / total
    };
    let radii: Vec<f64> = spectrum.eigenvalues.iter().map(|z| z.norm()).collect();
    ks(&radii, cdf)
}

/// Kolmogorov distance of `|λ|` to `F(r) = r²` on the unit disk.
pub fn circular_radial_distance(spectrum: &EmpiricalSpectrum) -> KsResult {
    let radii: Vec<f64> = spectrum.eigenvalues.iter().map(|z| z.norm()).collect();
    ks(&radii, |r| (r * r).min(1.0))
}

/// Profile points produced by the solver (excluding edge-fit values).
pub fn solver_points(profile: &DensityProfile) -> usize {
    profile.points.iter().filter(|p| p.method != SigmaMethod::EdgeFit).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::ModelSpec;

    fn averaging_spec(n: usize, seed: u64) -> EnsembleSpec {
        EnsembleSpec {
            model: ModelDocument {
                model: ModelSpec::Averaging { scale: 1.0 },
                dimension: 1,
            },
            field: Field::Complex,
            n,
            seed,
            samples: 1,
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn bump_laplacian_integrates_to_zero_and_matches_l1() {
        let b = Bump::new(Complex64::new(0.1, -0.2), 0.7);
        let zero = integrate_against_density(&|z| b.laplacian(z), b.center, b.radius, &|_| 1.0);
        assert!(zero.abs() < 1e-10);
        let mass = integrate_against_density(&|z| b.value(z), b.center, b.radius, &|_| 1.0);
        assert!((mass - b.integral()).abs() < 1e-10);
        let l1 = integrate_against_density(&|z| b.laplacian(z).abs(), b.center, b.radius, &|_| 1.0);
        assert!((l1 - b.laplacian_l1()).abs() < 1e-2);
    }

    #[test]
    fn samples_are_reproducible_and_independent() {
        let spec = averaging_spec(6, 9);
        assert_eq!(sample(&spec, 0).unwrap(), sample(&spec, 0).unwrap());
        assert_ne!(sample(&spec, 0).unwrap(), sample(&spec, 1).unwrap());
        let other = averaging_spec(6, 10);
        assert_ne!(sample(&spec, 0).unwrap(), sample(&other, 0).unwrap());
    }

    #[test]
    fn zero_dimension_is_rejected() {
        assert!(matches!(sample(&averaging_spec(0, 1), 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn hermitization_spectrum_is_chiral() {
        let x = sample(&averaging_spec(20, 3), 0).unwrap();
        let vals = linalg::hermitian_eigenvalues(&hermitization(&x, Complex64::new(0.2, 0.1)));
        let m = vals.len();
        for k in 0..m / 2 {
            assert!((vals[k] + vals[m - 1 - k]).abs() < 1e-10);
        }
    }

    #[test]
    fn kolmogorov_distance_of_a_perfect_grid() {
        let v: Vec<f64> = (0..100).map(|k| (k as f64 + 0.5) / 100.0).collect();
        assert!((kolmogorov_distance(&v, |x| x) - 0.005).abs() < 1e-12);
    }
}
