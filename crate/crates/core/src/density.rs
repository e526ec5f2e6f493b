//! Density `σ(τ)` of the limiting spectral measure, `τ = |ζ|²`, together
//! with the edge data (jump height, edge cubic), the log potential `L` and
//! the Brown measure front end.
//!
//! `σ` is evaluated two ways. Away from the origin the stability route
//! solves `(1 − ℱ𝒯)Y = K` on the complement of the deflation direction and
//! returns `(‖Y‖² − ‖ℱ𝒯Y‖²)/(πτ)`. Close to the origin (and whenever the
//! deflated solve fails) `σ = (1/π)∂_τ(τ⟨U⟩)` is differentiated numerically.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_PI, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceOperator, PerronData};
use crate::dyson::{DysonOptions, DysonSolution, DysonSolver};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, json_hash};
use crate::linalg::{self, avg, herm, CMat};
use crate::stability::StabilityBundle;

/// Below `STABILITY_THRESHOLD·ρ` the finite-difference route is used.
pub const STABILITY_THRESHOLD: f64 = 0.05;

/// Contiguous grid points solved as one warm-started chain.
const CHAIN_BLOCK: usize = 16;

/// `τ/ρ` nodes of the edge fit.
const EDGE_FIT_NODES: [f64; 10] = [0.90, 0.91, 0.92, 0.93, 0.94, 0.95, 0.96, 0.97, 0.98, 0.99];

/// Smallest flatness constant accepted without a warning.
const FLATNESS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMethod {
    Stability,
    FiniteDifference,
    EdgeFit,
}

impl SigmaMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SigmaMethod::Stability => "stability",
            SigmaMethod::FiniteDifference => "finite_difference",
            SigmaMethod::EdgeFit => "edge_fit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaPoint {
    pub tau: f64,
    pub sigma: f64,
    pub method: SigmaMethod,
}

/// τ-grid of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// `points` nodes. Without `upper` they are `kρ/points`, `k < points`;
    /// with it they run from 0 to `upper·ρ` inclusive.
    Uniform {
        points: usize,
        #[serde(default)]
        upper: Option<f64>,
    },
    /// Explicit ascending values in `[0, ρ)`.
    Explicit { taus: Vec<f64> },
}

impl GridSpec {
    pub fn uniform(points: usize) -> Self {
        GridSpec::Uniform { points, upper: None }
    }

    pub fn taus(&self, rho: f64) -> Result<Vec<f64>> {
        let taus = match self {
            GridSpec::Uniform { points, upper } => {
                let m = *points;
                if m < 2 {
                    return Err(Error::InsufficientGrid(format!(
                        "need at least 2 points, got {m}"
                    )));
                }
                match upper {
                    None => (0..m).map(|k| k as f64 * rho / m as f64).collect(),
                    Some(u) => {
                        if !(*u > 0.0 && *u < 1.0) {
                            return Err(Error::InvalidArgument(format!(
                                "grid upper fraction must lie in (0, 1), got {u}"
                            )));
                        }
                        (0..m).map(|k| k as f64 * u * rho / (m - 1) as f64).collect()
                    }
                }
            }
            GridSpec::Explicit { taus } => {
                if taus.len() < 2 {
                    return Err(Error::InsufficientGrid(format!(
                        "need at least 2 points, got {}",
                        taus.len()
                    )));
                }
                taus.clone()
            }
        };
        for w in taus.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidArgument("grid must be strictly ascending".into()));
            }
        }
        let (lo, hi) = (taus[0], taus[taus.len() - 1]);
        if !(lo >= 0.0) || !(hi < rho) {
            return Err(Error::InvalidArgument(format!(
                "grid must lie in [0, {rho}), got [{lo}, {hi}]"
            )));
        }
        Ok(taus)
    }
}

/// Linear fits of `σ` over `τ/ρ ∈ [0.9, 0.99]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeFit {
    pub taus: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub jump: f64,
    /// Free fit `σ ≈ a + b(τ − ρ)`: value `a` at the edge and slope `b`.
    pub extrapolated: f64,
    pub slope: f64,
    /// `|a − jump|/jump`.
    pub relative_gap: f64,
    /// Slope of the fit `σ − jump ≈ s(τ − ρ)` through the edge value.
    pub pinned_slope: f64,
    /// Relative residual of `σ − jump ≈ c(1 − √(τ/ρ))`.
    pub sqrt_residual: f64,
}

impl EdgeFit {
    pub fn value(&self, tau: f64, rho: f64) -> f64 {
        self.jump + self.pinned_slope * (tau - rho)
    }
}

/// Density on a τ-grid plus its integral.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityProfile {
    pub model_hash: String,
    pub rho: f64,
    pub jump: f64,
    /// `π∫₀^ρ σ dτ`.
    pub normalization: f64,
    pub points: Vec<SigmaPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_fit: Option<EdgeFit>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl DensityProfile {
    pub fn tau_grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.tau).collect()
    }

    pub fn sigma_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.sigma).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,abs_zeta,sigma,method\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(p.tau),
                fmt_f64(p.tau.sqrt()),
                fmt_f64(p.sigma),
                p.method.as_str()
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialRegion {
    Inside,
    /// Within the edge margin; `−log|ζ|` is used, which is off by `O(margin²)`.
    Edge,
    Outside,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LogPotential {
    pub zeta: Complex64,
    pub value: f64,
    pub region: PotentialRegion,
}

/// Five-point Laplacian stencils of step `h` around `centers`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaplacianGrid {
    pub h: f64,
    pub centers: Vec<Complex64>,
}

impl LaplacianGrid {
    /// `count` lattice points on the positive real axis and as many on the
    /// diagonal, spread over the disk of radius `√ρ − 4h`.
    pub fn interior(rho: f64, h: f64, count: usize) -> Self {
        let r_max = rho.sqrt() - 4.0 * h;
        let snap = |x: f64| (x / h).round() * h;
        let mut centers = Vec::new();
        for k in 0..count {
            let r = r_max * k as f64 / count.max(2).saturating_sub(1) as f64;
            centers.push(Complex64::new(snap(r), 0.0));
            let d = snap(r * std::f64::consts::FRAC_1_SQRT_2);
            if k > 0 {
                centers.push(Complex64::new(d, d));
            }
        }
        Self { h, centers }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaplacianPoint {
    pub zeta: Complex64,
    pub laplacian: f64,
    pub sigma: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaplacianReport {
    pub h: f64,
    pub max_deviation: f64,
    pub points: Vec<LaplacianPoint>,
}

struct Evaluated {
    point: SigmaPoint,
    solution: DysonSolution,
    fallback: Option<String>,
}

/// Density evaluator bound to one operator.
#[derive(Debug, Clone)]
pub struct DensityEvaluator<'a> {
    solver: DysonSolver<'a>,
    perron: PerronData,
}

impl<'a> DensityEvaluator<'a> {
    pub fn new(op: &'a CovarianceOperator) -> Result<Self> {
        Self::with_options(op, DysonOptions::default())
    }

    pub fn with_options(op: &'a CovarianceOperator, opts: DysonOptions) -> Result<Self> {
        let perron = op.spectral_radius()?;
        if !(perron.rho > 0.0) {
            return Err(Error::ZeroOperator);
        }
        Ok(Self {
            solver: DysonSolver::with_rho(op, perron.rho, opts),
            perron,
        })
    }

    pub fn rho(&self) -> f64 {
        self.perron.rho
    }

    pub fn perron(&self) -> &PerronData {
        &self.perron
    }

    pub fn solver(&self) -> &DysonSolver<'a> {
        &self.solver
    }

    fn op(&self) -> &'a CovarianceOperator {
        self.solver.operator()
    }

    fn check_interior(&self, tau: f64) -> Result<()> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be nonnegative, got {tau}")));
        }
        let margin = self.solver.margin();
        if tau >= self.rho() - margin {
            return Err(Error::EdgeProximity {
                tau,
                rho: self.rho(),
                margin,
            });
        }
        Ok(())
    }

    /// `⟨S₁S₂⟩²/(πρ⟨(S₁S₂)²⟩)`.
    pub fn jump_height(&self) -> f64 {
        let s12 = &self.perron.s1 * &self.perron.s2;
        let first = avg(&s12).re;
        let second = avg(&(&s12 * &s12)).re;
        first * first / (PI * self.rho() * second)
    }

    /// Finite-difference step at `τ`.
    pub fn fd_step(&self, tau: f64) -> f64 {
        (1e-3 * (self.rho() - tau)).max(1e-5)
    }

    /// `σ` from the stability operator at a bulk solution.
    pub fn sigma_stability(&self, sol: &DysonSolution) -> Result<f64> {
        let bundle = StabilityBundle::build(sol, self.op())?;
        Ok(bundle.density()?.0)
    }

    /// `(1/π)∂_τ(τ⟨U⟩)` by finite differences around the solution `base`.
    pub fn sigma_finite_difference(&self, base: &DysonSolution) -> Result<f64> {
        let tau = base.tau;
        let g = |s: &DysonSolution| s.tau * avg(&s.u).re;
        if tau == 0.0 {
            return Ok(avg(&base.u).re * FRAC_1_PI);
        }
        let h = self.fd_step(tau);
        let at = |t: f64| -> Result<f64> { Ok(g(&self.solver.solve_bulk_from(t, base)?)) };
        let top = self.rho() - self.solver.margin();
        let derivative = if tau < h {
            (-3.0 * g(base) + 4.0 * at(tau + h)? - at(tau + 2.0 * h)?) / (2.0 * h)
        } else if tau + h >= top {
            (3.0 * g(base) - 4.0 * at(tau - h)? + at(tau - 2.0 * h)?) / (2.0 * h)
        } else {
            (at(tau + h)? - at(tau - h)?) / (2.0 * h)
        };
        Ok(derivative * FRAC_1_PI)
    }

    fn evaluate(&self, tau: f64, warm: Option<&DysonSolution>) -> Result<Evaluated> {
        self.check_interior(tau)?;
        let solution = match warm {
            Some(w) => self.solver.solve_bulk_from(tau, w)?,
            None => self.solver.solve_bulk(tau)?,
        };
        let mut fallback = None;
        if tau >= STABILITY_THRESHOLD * self.rho() {
            match self.sigma_stability(&solution) {
                Ok(sigma) => {
                    return Ok(Evaluated {
                        point: SigmaPoint {
                            tau,
                            sigma,
                            method: SigmaMethod::Stability,
                        },
                        solution,
                        fallback,
                    })
                }
                Err(e) => fallback = Some(e.to_string()),
            }
        }
        let sigma = self.sigma_finite_difference(&solution)?;
        Ok(Evaluated {
            point: SigmaPoint {
                tau,
                sigma,
                method: SigmaMethod::FiniteDifference,
            },
            solution,
            fallback,
        })
    }

    /// `σ(τ)` with the method that produced it.
    pub fn sigma_point(&self, tau: f64) -> Result<SigmaPoint> {
        let ev = self.evaluate(tau, None)?;
        if let Some(why) = &ev.fallback {
            log::warn!("stability route failed at tau = {tau} ({why}); used finite differences");
        }
        Ok(ev.point)
    }

    pub fn sigma_at(&self, tau: f64) -> Result<f64> {
        Ok(self.sigma_point(tau)?.sigma)
    }

    /// Both routes at one bulk point: `(stability, finite difference)`.
    pub fn sigma_both(&self, tau: f64) -> Result<(f64, f64)> {
        self.check_interior(tau)?;
        let sol = self.solver.solve_bulk(tau)?;
        Ok((self.sigma_stability(&sol)?, self.sigma_finite_difference(&sol)?))
    }

    fn chain(&self, taus: &[f64]) -> Result<Vec<Evaluated>> {
        let mut out: Vec<Evaluated> = Vec::with_capacity(taus.len());
        for &tau in taus {
            let ev = self.evaluate(tau, out.last().map(|e| &e.solution))?;
            out.push(ev);
        }
        Ok(out)
    }

    fn evaluate_grid(&self, taus: &[f64]) -> Result<Vec<Evaluated>> {
        let blocks: Vec<Result<Vec<Evaluated>>> =
            taus.par_chunks(CHAIN_BLOCK).map(|b| self.chain(b)).collect();
        let mut out = Vec::with_capacity(taus.len());
        for b in blocks {
            out.extend(b?);
        }
        Ok(out)
    }

    /// Fits over `τ/ρ ∈ [0.9, 0.99]`.
    pub fn edge_fit(&self) -> Result<EdgeFit> {
        let rho = self.rho();
        let taus: Vec<f64> = EDGE_FIT_NODES.iter().map(|f| f * rho).collect();
        let sigmas: Vec<f64> = self.chain(&taus)?.iter().map(|e| e.point.sigma).collect();
        Ok(fit_edge(&taus, &sigmas, rho, self.jump_height()))
    }

    pub fn profile(&self, grid: &GridSpec) -> Result<DensityProfile> {
        let rho = self.rho();
        let taus = grid.taus(rho)?;
        let top = rho - self.solver.margin();
        let split = taus.partition_point(|&t| t < top);
        let (inner, edge) = taus.split_at(split);
        let mut warnings = Vec::new();
        let mut points = Vec::with_capacity(taus.len());
        let mut fallbacks = 0usize;
        let mut first_reason = None;
        let mut origin = None;
        if let Some(&t0) = inner.first() {
            if t0 > 0.0 {
                origin = Some(self.evaluate(0.0, None)?.point.sigma);
            }
        }
        for ev in self.evaluate_grid(inner)? {
            if let Some(why) = ev.fallback {
                fallbacks += 1;
                first_reason.get_or_insert(why);
            }
            points.push(ev.point);
        }
        if fallbacks > 0 {
            let msg = format!(
                "stability route failed at {fallbacks} point(s), finite differences used (first: {})",
                first_reason.unwrap_or_default()
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let jump = self.jump_height();
        let edge_fit = if edge.is_empty() {
            None
        } else {
            let fit = self.edge_fit()?;
            for &tau in edge {
                points.push(SigmaPoint {
                    tau,
                    sigma: fit.value(tau, rho),
                    method: SigmaMethod::EdgeFit,
                });
            }
            Some(fit)
        };
        let mut xs = Vec::with_capacity(points.len() + 2);
        let mut ys = Vec::with_capacity(points.len() + 2);
        if let Some(s0) = origin {
            xs.push(0.0);
            ys.push(s0);
        }
        for p in &points {
            xs.push(p.tau);
            ys.push(p.sigma);
        }
        xs.push(rho);
        ys.push(jump);
        let normalization = PI * simpson(&xs, &ys);
        if let Some(p) = points.iter().find(|p| !(p.sigma > 0.0)) {
            let msg = format!("nonpositive density {} at tau = {}", p.sigma, p.tau);
            log::warn!("{msg}");
            warnings.push(msg);
        }
        Ok(DensityProfile {
            model_hash: json_hash(&self.op().to_document())?,
            rho,
            jump,
            normalization,
            points,
            edge_fit,
            warnings,
        })
    }

    /// Positive root `α` of `α³⟨(S₁S₂)²⟩ + α(τ/ρ − 1)⟨S₁S₂⟩ − η/√ρ = 0`,
    /// returned in the units of the operator, so that `Vᵢ ≈ α Sᵢ`.
    pub fn edge_cubic(&self, tau: f64, eta: f64) -> Result<f64> {
        let rho = self.rho();
        if !((tau - rho).abs() <= 0.2 * rho) {
            return Err(Error::InvalidArgument(format!(
                "edge cubic needs |tau - rho| <= 0.2 rho, got tau = {tau}, rho = {rho}"
            )));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta must be nonnegative, got {eta}")));
        }
        let s12 = &self.perron.s1 * &self.perron.s2;
        let a = avg(&(&s12 * &s12)).re;
        let b = (tau / rho - 1.0) * avg(&s12).re;
        Ok(cubic_positive_root(a, b, eta / rho.sqrt())? / rho.sqrt())
    }

    /// `½(⟨V₁𝒮V₂⟩ − ⟨log(τ + (𝒮*V₁)(𝒮V₂))⟩)` at a bulk solution.
    pub fn log_potential_inside(&self, sol: &DysonSolution) -> Result<f64> {
        let op = self.op();
        let a1 = herm(&op.apply(&sol.v1, true)?);
        let a2 = herm(&op.apply(&sol.v2, false)?);
        let first = avg(&(&sol.v1 * &a2)).re;
        let root = linalg::hermitian_fn(&a1, |x| x.max(0.0).sqrt());
        let mu = linalg::hermitian_eigenvalues(&(&root * &a2 * &root));
        let top = mu.iter().cloned().fold(0.0, f64::max);
        let mut logdet = 0.0;
        for &m in &mu {
            if m < -1e-10 * top.max(1.0) {
                return Err(Error::NotPositiveDefinite(format!(
                    "log potential: eigenvalue {m:.3e} of the product is negative"
                )));
            }
            let arg = sol.tau + m.max(0.0);
            if !(arg > 0.0) {
                return Err(Error::NotPositiveDefinite(
                    "log potential: vanishing determinant".into(),
                ));
            }
            logdet += arg.ln();
        }
        Ok(0.5 * (first - logdet / mu.len() as f64))
    }

    pub fn log_potential(&self, zeta: Complex64) -> Result<LogPotential> {
        let tau = zeta.norm_sqr();
        if !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("zeta must be finite, got {zeta}")));
        }
        let rho = self.rho();
        let (value, region) = if tau >= rho {
            (-zeta.norm().ln(), PotentialRegion::Outside)
        } else if tau >= rho - self.solver.margin() {
            (-zeta.norm().ln(), PotentialRegion::Edge)
        } else {
            let sol = self.solver.solve_bulk(tau)?;
            (self.log_potential_inside(&sol)?, PotentialRegion::Inside)
        };
        Ok(LogPotential { zeta, value, region })
    }

    /// Largest `|ΔL + 2πσ|/(2πσ)` over the stencils of `grid`.
    pub fn laplacian_check(&self, grid: &LaplacianGrid) -> Result<LaplacianReport> {
        let h = grid.h;
        if !(h > 0.0) || grid.centers.is_empty() {
            return Err(Error::InsufficientGrid("laplacian check needs h > 0 and a center".into()));
        }
        let top = self.rho() - self.solver.margin();
        let stencil = |z: Complex64| {
            [
                z,
                z + h,
                z - h,
                z + Complex64::new(0.0, h),
                z - Complex64::new(0.0, h),
            ]
        };
        let mut needed: BTreeMap<u64, f64> = BTreeMap::new();
        for &z in &grid.centers {
            if (z.norm() + 3.0 * h).powi(2) >= top {
                return Err(Error::InvalidArgument(format!(
                    "stencil at {z} is within 3 steps of the edge"
                )));
            }
            for p in stencil(z) {
                let t = p.norm_sqr();
                needed.insert(t.to_bits(), t);
            }
        }
        let taus: Vec<f64> = needed.values().cloned().collect();
        let mut sols: BTreeMap<u64, DysonSolution> = BTreeMap::new();
        let mut prev: Option<DysonSolution> = None;
        for &t in &taus {
            let sol = match &prev {
                Some(w) => self.solver.solve_bulk_from(t, w)?,
                None => self.solver.solve_bulk(t)?,
            };
            prev = Some(sol.clone());
            sols.insert(t.to_bits(), sol);
        }
        let mut values: BTreeMap<u64, f64> = BTreeMap::new();
        for (k, sol) in &sols {
            values.insert(*k, self.log_potential_inside(sol)?);
        }
        let mut points = Vec::with_capacity(grid.centers.len());
        let mut max_deviation: f64 = 0.0;
        for &z in &grid.centers {
            let s = stencil(z);
            let l = |p: Complex64| values[&p.norm_sqr().to_bits()];
            let lap = (l(s[1]) + l(s[2]) + l(s[3]) + l(s[4]) - 4.0 * l(s[0])) / (h * h);
            let base = &sols[&z.norm_sqr().to_bits()];
            let sigma = if base.tau >= STABILITY_THRESHOLD * self.rho() {
                self.sigma_stability(base)
                    .or_else(|_| self.sigma_finite_difference(base))?
            } else {
                self.sigma_finite_difference(base)?
            };
            let deviation = (lap + 2.0 * PI * sigma).abs() / (2.0 * PI * sigma);
            max_deviation = max_deviation.max(deviation);
            points.push(LaplacianPoint {
                zeta: z,
                laplacian: lap,
                sigma,
                deviation,
            });
        }
        Ok(LaplacianReport {
            h,
            max_deviation,
            points,
        })
    }
}

fn fit_edge(taus: &[f64], sigmas: &[f64], rho: f64, jump: f64) -> EdgeFit {
    let m = taus.len() as f64;
    let xs: Vec<f64> = taus.iter().map(|t| t - rho).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = sigmas.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(sigmas).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let extrapolated = my - slope * mx;
    let dy: Vec<f64> = sigmas.iter().map(|s| s - jump).collect();
    let pinned_slope = xs.iter().zip(&dy).map(|(x, d)| x * d).sum::<f64>()
        / xs.iter().map(|x| x * x).sum::<f64>();
    let us: Vec<f64> = taus.iter().map(|t| 1.0 - (t / rho).sqrt()).collect();
    let c = us.iter().zip(&dy).map(|(u, d)| u * d).sum::<f64>() / us.iter().map(|u| u * u).sum::<f64>();
    let scale = dy.iter().map(|d| d * d).sum::<f64>().sqrt();
    let sqrt_residual = if scale <= 1e-9 * jump.abs() {
        0.0
    } else {
        us.iter()
            .zip(&dy)
            .map(|(u, d)| (d - c * u).powi(2))
            .sum::<f64>()
            .sqrt()
            / scale
    };
    EdgeFit {
        taus: taus.to_vec(),
        sigmas: sigmas.to_vec(),
        jump,
        extrapolated,
        slope,
        relative_gap: (extrapolated - jump).abs() / jump,
        pinned_slope,
        sqrt_residual,
    }
}

/// Positive root of `aα³ + bα − e` with `a > 0`, `e ≥ 0`.
fn cubic_positive_root(a: f64, b: f64, e: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("cubic needs a positive leading coefficient, got {a}")));
    }
    if e == 0.0 {
        return if b < 0.0 {
            Ok((-b / a).sqrt())
        } else {
            Err(Error::NoPositiveRoot { nearest: 0.0 })
        };
    }
    let f = |x: f64| a * x * x * x + b * x - e;
    // f is convex on α > 0, so Newton from the right of the root is monotone.
    let mut x = 1.0f64.max((b.abs() / a).sqrt()).max((e / a).cbrt());
    while f(x) < 0.0 {
        x *= 2.0;
    }
    for _ in 0..200 {
        let step = f(x) / (3.0 * a * x * x + b);
        let next = x - step;
        if !(next > 0.0) || !step.is_finite() {
            break;
        }
        x = next;
        if step.abs() <= 1e-16 * x {
            break;
        }
    }
    Ok(x)
}

/// Composite Simpson on an arbitrary ascending grid; an odd interval count
/// closes with the quadratic through the last three nodes.
fn simpson(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len();
    if m < 2 {
        return 0.0;
    }
    if m == 2 {
        return 0.5 * (x[1] - x[0]) * (y[0] + y[1]);
    }
    let intervals = m - 1;
    let paired = intervals - intervals % 2;
    let mut total = 0.0;
    let mut i = 0;
    while i < paired {
        let (h0, h1) = (x[i + 1] - x[i], x[i + 2] - x[i + 1]);
        total += (h0 + h1) / 6.0
            * ((2.0 - h1 / h0) * y[i] + (h0 + h1).powi(2) / (h0 * h1) * y[i + 1] + (2.0 - h0 / h1) * y[i + 2]);
        i += 2;
    }
    if intervals % 2 == 1 {
        let (h0, h1) = (x[m - 2] - x[m - 3], x[m - 1] - x[m - 2]);
        let alpha = (2.0 * h1 * h1 + 3.0 * h0 * h1) / (6.0 * (h0 + h1));
        let beta = (h1 * h1 + 3.0 * h0 * h1) / (6.0 * h0);
        let gamma = h1.powi(3) / (6.0 * h0 * (h0 + h1));
        total += alpha * y[m - 1] + beta * y[m - 2] - gamma * y[m - 3];
    }
    total
}

pub fn sigma_at(op: &CovarianceOperator, tau: f64) -> Result<f64> {
    DensityEvaluator::new(op)?.sigma_at(tau)
}

pub fn sigma_profile(op: &CovarianceOperator, grid: &GridSpec) -> Result<DensityProfile> {
    DensityEvaluator::new(op)?.profile(grid)
}

pub fn jump_height(op: &CovarianceOperator) -> Result<f64> {
    Ok(DensityEvaluator::new(op)?.jump_height())
}

pub fn solve_edge_cubic(op: &CovarianceOperator, tau: f64, eta: f64) -> Result<f64> {
    DensityEvaluator::new(op)?.edge_cubic(tau, eta)
}

pub fn log_potential(op: &CovarianceOperator, zeta: Complex64) -> Result<LogPotential> {
    DensityEvaluator::new(op)?.log_potential(zeta)
}

pub fn laplacian_check(op: &CovarianceOperator, grid: &LaplacianGrid) -> Result<LaplacianReport> {
    DensityEvaluator::new(op)?.laplacian_check(grid)
}

/// Density of the Brown measure of `Σ aⱼ ⊗ cⱼ` with free circular `cⱼ`.
pub fn brown_measure(coefficients: Vec<CMat>, grid: &GridSpec) -> Result<DensityProfile> {
    let op = CovarianceOperator::kronecker(coefficients)?;
    let (lo, hi) = op.flatness_bounds(4, 0);
    let mut profile = sigma_profile(&op, grid)?;
    if lo < FLATNESS_FLOOR * hi.max(f64::MIN_POSITIVE) {
        let msg = format!(
            "flatness estimate failed: lower constant {lo:.3e}, upper {hi:.3e}; the density may be unreliable"
        );
        log::warn!("{msg}");
        profile.warnings.push(msg);
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;

    #[test]
    fn simpson_is_exact_on_cubics_and_uneven_grids() {
        let x = [0.0, 0.1, 0.35, 0.5, 0.8, 1.0];
        let y: Vec<f64> = x.iter().map(|t| 1.0 + t * t).collect();
        assert!((simpson(&x, &y) - 4.0 / 3.0).abs() < 1e-14);
        let x = [0.0, 0.25, 0.5, 0.75, 1.0];
        let y: Vec<f64> = x.iter().map(|t| t * t * t).collect();
        assert!((simpson(&x, &y) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn cubic_roots() {
        assert!((cubic_positive_root(1.0, -0.01, 0.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((cubic_positive_root(1.0, 0.0, 1e-6).unwrap() - 1e-2).abs() < 1e-15);
        let r = cubic_positive_root(2.0, -0.3, 0.05).unwrap();
        assert!((2.0 * r.powi(3) - 0.3 * r - 0.05).abs() < 1e-14);
        assert!(matches!(cubic_positive_root(1.0, 0.5, 0.0), Err(Error::NoPositiveRoot { .. })));
    }

    #[test]
    fn grid_of_one_point_is_rejected() {
        let op = models::circular(2);
        assert!(matches!(
            sigma_profile(&op, &GridSpec::uniform(1)),
            Err(Error::InsufficientGrid(_))
        ));
        assert!(matches!(
            sigma_profile(&op, &GridSpec::Explicit { taus: vec![0.3] }),
            Err(Error::InsufficientGrid(_))
        ));
    }

    #[test]
    fn refuses_tau_at_or_beyond_the_edge() {
        let op = models::circular(2);
        assert!(matches!(sigma_at(&op, 1.0), Err(Error::EdgeProximity { .. })));
        assert!(matches!(sigma_at(&op, 0.9995), Err(Error::EdgeProximity { .. })));
    }
}
