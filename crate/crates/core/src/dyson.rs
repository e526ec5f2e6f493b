//! Coupled Dyson equations for `(V₁, V₂, U)` at `τ = |ζ|²` and `η ≥ 0`:
//!
//! ```text
//! 1/V₁ = η + 𝒮V₂ + τ(η + 𝒮*V₁)⁻¹
//! 1/V₂ = η + 𝒮*V₁ + τ(η + 𝒮V₂)⁻¹
//! U    = (τ + (η + 𝒮*V₁)(η + 𝒮V₂))⁻¹
//! ```

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceOperator;
use crate::error::{Error, Result};
use crate::io::ComplexMatrixJson;
use crate::krylov;
use crate::linalg::{self, add_scalar, avg, c, herm, hs_norm, identity, CMat, I};

#[derive(Debug, Clone, Copy)]
pub struct DysonOptions {
    /// Residual at which the iteration stops.
    pub tol: f64,
    /// Largest residual still reported as a solution.
    pub accept_tol: f64,
    /// Largest residual of an intermediate continuation rung.
    pub rung_tol: f64,
    pub max_iter: usize,
    /// Initial damping θ of the fixed-point map.
    pub damping: f64,
    pub min_damping: f64,
    /// Anderson history depth; 0 disables acceleration.
    pub anderson_depth: usize,
    /// Iterations without a 10% improvement of the best residual before giving up.
    pub stall_window: usize,
    /// Fixed-point sweeps before switching to Newton–Krylov.
    pub newton_after: usize,
    pub newton_steps: usize,
    pub eta0: f64,
    pub eta_ratio: f64,
    pub eta_min: f64,
    /// Edge margin as a fraction of ρ.
    pub margin: f64,
}

impl Default for DysonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            accept_tol: 1e-8,
            rung_tol: 1e-5,
            max_iter: 20_000,
            damping: 0.5,
            min_damping: 1.0 / 1024.0,
            anderson_depth: 6,
            stall_window: 400,
            newton_after: 150,
            newton_steps: 40,
            eta0: 1.0,
            eta_ratio: 0.5,
            eta_min: 1e-9,
            margin: 1e-3,
        }
    }
}

/// Solution of the Dyson system at one `(τ, η)`.
#[derive(Debug, Clone)]
pub struct DysonSolution {
    pub tau: f64,
    pub eta: f64,
    pub v1: CMat,
    pub v2: CMat,
    pub u: CMat,
    pub residual_dyson: f64,
    pub residual_u: f64,
    pub iterations: usize,
    /// η values visited, last entry being `eta`.
    pub continuation_path: Vec<f64>,
    /// `⟨V₁⟩` at each rung of `continuation_path`.
    pub continuation_avg_v1: Vec<f64>,
}

impl DysonSolution {
    pub fn dimension(&self) -> usize {
        self.v1.nrows()
    }

    pub fn avg_v1(&self) -> f64 {
        avg(&self.v1).re
    }

    pub fn avg_v2(&self) -> f64 {
        avg(&self.v2).re
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&DysonSolutionJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: DysonSolutionJson = serde_json::from_str(text)?;
        Ok(Self {
            tau: j.tau,
            eta: j.eta,
            v1: j.v1.to_matrix()?,
            v2: j.v2.to_matrix()?,
            u: j.u.to_matrix()?,
            residual_dyson: j.residual_dyson,
            residual_u: j.residual_u,
            iterations: j.iterations,
            continuation_path: j.continuation_path,
            continuation_avg_v1: j.continuation_avg_v1,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DysonSolutionJson {
    tau: f64,
    eta: f64,
    v1: ComplexMatrixJson,
    v2: ComplexMatrixJson,
    u: ComplexMatrixJson,
    residual_dyson: f64,
    residual_u: f64,
    iterations: usize,
    continuation_path: Vec<f64>,
    continuation_avg_v1: Vec<f64>,
}

impl From<&DysonSolution> for DysonSolutionJson {
    fn from(s: &DysonSolution) -> Self {
        Self {
            tau: s.tau,
            eta: s.eta,
            v1: ComplexMatrixJson::from_matrix(&s.v1),
            v2: ComplexMatrixJson::from_matrix(&s.v2),
            u: ComplexMatrixJson::from_matrix(&s.u),
            residual_dyson: s.residual_dyson,
            residual_u: s.residual_u,
            iterations: s.iterations,
            continuation_path: s.continuation_path.clone(),
            continuation_avg_v1: s.continuation_avg_v1.clone(),
        }
    }
}

/// The `2n × 2n` solution `M = [[iV₁, −ζU], [−ζ̄U*, iV₂]]`.
#[derive(Debug, Clone)]
pub struct BlockSolution {
    pub zeta: Complex64,
    pub eta: f64,
    pub m: CMat,
    pub mde_residual: f64,
}

impl BlockSolution {
    /// Normalized trace of `M`.
    pub fn avg(&self) -> Complex64 {
        avg(&self.m)
    }
}

/// Residuals of the algebraic identities satisfied by a solution.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityReport {
    /// `U = V₁V₂ + τU²`.
    pub u_equation: f64,
    /// `V₂(η + 𝒮*V₁) = (η + 𝒮V₂)V₁`.
    pub comparison: f64,
    /// `U(η + 𝒮*V₁) = V₁` and `(η + 𝒮V₂)U = V₂`.
    pub u_identity: f64,
    /// `V₁ = η(V₁² + τUU*) + V₁(𝒮V₂)V₁ + τU(𝒮*V₁)U*`.
    pub im_first: f64,
    /// `V₂ = η(V₂² + τU*U) + V₂(𝒮*V₁)V₂ + τU*(𝒮V₂)U`.
    pub im_second: f64,
    /// `|⟨V₁⟩ − ⟨V₂⟩|`.
    pub trace: f64,
    pub max: f64,
}

/// Dyson solver bound to one operator and its spectral radius.
#[derive(Debug, Clone)]
pub struct DysonSolver<'a> {
    op: &'a CovarianceOperator,
    rho: f64,
    opts: DysonOptions,
}

impl<'a> DysonSolver<'a> {
    pub fn new(op: &'a CovarianceOperator) -> Result<Self> {
        Self::with_options(op, DysonOptions::default())
    }

    pub fn with_options(op: &'a CovarianceOperator, opts: DysonOptions) -> Result<Self> {
        let rho = op.spectral_radius()?.rho;
        Ok(Self { op, rho, opts })
    }

    /// Skips the Perron computation when `ρ` is already known.
    pub fn with_rho(op: &'a CovarianceOperator, rho: f64, opts: DysonOptions) -> Self {
        Self { op, rho, opts }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn operator(&self) -> &'a CovarianceOperator {
        self.op
    }

    pub fn options(&self) -> &DysonOptions {
        &self.opts
    }

    pub fn margin(&self) -> f64 {
        self.opts.margin * self.rho
    }

    /// Damped fixed-point iteration at `η > 0`.
    pub fn solve_at(
        &self,
        tau: f64,
        eta: f64,
        warm_start: Option<&DysonSolution>,
    ) -> Result<DysonSolution> {
        check_tau(tau)?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
        }
        let (v1, v2) = self.initial(warm_start, eta);
        let it = iterate(self.op, tau, eta, v1, v2, &self.opts)?;
        let sol = finish(self.op, tau, eta, it.v1, it.v2, it.iterations, it.residual)?;
        let sol = DysonSolution {
            continuation_path: vec![eta],
            continuation_avg_v1: vec![avg(&sol.v1).re],
            ..sol
        };
        if sol.residual_dyson > self.opts.accept_tol {
            return Err(Error::DysonNotConverged {
                eta,
                residual: sol.residual_dyson,
                best: Box::new(sol),
            });
        }
        Ok(sol)
    }

    /// Solution at `η = 0` inside the bulk via η-continuation, Richardson
    /// extrapolation and a final polish of the `η = 0` equations.
    pub fn solve_bulk(&self, tau: f64) -> Result<DysonSolution> {
        self.check_bulk(tau)?;
        let ladder = self.ladder(tau, self.opts.eta_min, None, false)?;
        let n = ladder.len();
        let last = &ladder[n - 1];
        let (v1, v2) = if n >= 2 {
            let prev = &ladder[n - 2];
            let (ea, eb) = (prev.eta, last.eta);
            let w = c(eb / (ea - eb));
            let x1 = herm(&(&last.v1 - (&prev.v1 - &last.v1) * w));
            let x2 = herm(&(&last.v2 - (&prev.v2 - &last.v2) * w));
            if linalg::min_eigenvalue(&x1) > 0.0 && linalg::min_eigenvalue(&x2) > 0.0 {
                (x1, x2)
            } else {
                (last.v1.clone(), last.v2.clone())
            }
        } else {
            (last.v1.clone(), last.v2.clone())
        };
        let prior: usize = ladder.iter().map(|s| s.iterations).sum();
        let mut sol = self.polish(tau, v1, v2)?;
        sol.iterations += prior;
        let mut path: Vec<f64> = ladder.iter().map(|s| s.eta).collect();
        let mut avgs: Vec<f64> = ladder.iter().map(|s| s.avg_v1()).collect();
        path.push(0.0);
        avgs.push(sol.avg_v1());
        sol.continuation_path = path;
        sol.continuation_avg_v1 = avgs;
        Ok(sol)
    }

    /// Bulk solution started from a nearby solution (typically the previous
    /// point of a τ-sweep); falls back to the full continuation if the direct
    /// `η = 0` iteration does not converge.
    pub fn solve_bulk_from(&self, tau: f64, warm: &DysonSolution) -> Result<DysonSolution> {
        self.check_bulk(tau)?;
        if warm.dimension() == self.op.dimension()
            && linalg::min_eigenvalue(&warm.v1) > 0.0
            && linalg::min_eigenvalue(&warm.v2) > 0.0
        {
            if let Ok(mut sol) = self.polish(tau, warm.v1.clone(), warm.v2.clone()) {
                sol.continuation_path = vec![0.0];
                sol.continuation_avg_v1 = vec![sol.avg_v1()];
                return Ok(sol);
            }
            log::debug!("warm start at tau = {tau} failed, running continuation");
        }
        self.solve_bulk(tau)
    }

    /// Solution outside the spectrum. At `η = 0` this is `V = 0`, `U = 1/τ`;
    /// for `η > 0` the continuation ladder runs down to `eta`.
    pub fn solve_outside(&self, tau: f64, eta: f64) -> Result<DysonSolution> {
        check_tau(tau)?;
        let margin = self.margin();
        if tau <= self.rho + margin {
            return Err(Error::InsideBulk {
                tau,
                rho: self.rho,
                margin,
            });
        }
        if eta < 0.0 || !eta.is_finite() {
            return Err(Error::InvalidArgument(format!("eta must be nonnegative, got {eta}")));
        }
        let n = self.op.dimension();
        if eta == 0.0 {
            let mut sol = DysonSolution {
                tau,
                eta: 0.0,
                v1: CMat::zeros(n, n),
                v2: CMat::zeros(n, n),
                u: linalg::scalar(n, 1.0 / tau),
                residual_dyson: 0.0,
                residual_u: 0.0,
                iterations: 0,
                continuation_path: vec![0.0],
                continuation_avg_v1: vec![0.0],
            };
            let zeta = c(tau.sqrt());
            sol.residual_dyson = assemble_m(self.op, &sol, zeta)?.mde_residual;
            return Ok(sol);
        }
        let ladder = self.ladder(tau, eta, None, true)?;
        let mut sol = ladder.last().cloned().expect("ladder is never empty");
        sol.iterations = ladder.iter().map(|s| s.iterations).sum();
        sol.continuation_path = ladder.iter().map(|s| s.eta).collect();
        sol.continuation_avg_v1 = ladder.iter().map(|s| s.avg_v1()).collect();
        Ok(sol)
    }

    fn check_bulk(&self, tau: f64) -> Result<()> {
        check_tau(tau)?;
        let margin = self.margin();
        if tau >= self.rho - margin {
            return Err(Error::EdgeProximity {
                tau,
                rho: self.rho,
                margin,
            });
        }
        Ok(())
    }

    /// Geometric η ladder from `eta0` down to `eta_end` (always included).
    /// Intermediate rungs only serve as warm starts: they stop at a looser
    /// tolerance and are kept if their residual is below `rung_tol`. With
    /// `strict_last` the final rung must meet `accept_tol`.
    fn ladder(
        &self,
        tau: f64,
        eta_end: f64,
        warm: Option<&DysonSolution>,
        strict_last: bool,
    ) -> Result<Vec<DysonSolution>> {
        let mut etas = Vec::new();
        let mut eta = self.opts.eta0.max(eta_end);
        while eta > eta_end * (1.0 + 1e-12) {
            etas.push(eta);
            eta *= self.opts.eta_ratio;
        }
        etas.push(eta_end);
        let loose = DysonOptions {
            tol: self.opts.tol.max(1e-9),
            ..self.opts
        };
        let mut out: Vec<DysonSolution> = Vec::with_capacity(etas.len());
        for (k, &eta) in etas.iter().enumerate() {
            let last = k + 1 == etas.len();
            let strict = last && strict_last;
            let start = out.last().or(warm);
            let (v1, v2) = self.initial(start, eta);
            let opts = if strict { &self.opts } else { &loose };
            let it = iterate(self.op, tau, eta, v1, v2, opts)?;
            let mut sol = finish(self.op, tau, eta, it.v1, it.v2, it.iterations, it.residual)?;
            sol.continuation_path = vec![eta];
            sol.continuation_avg_v1 = vec![sol.avg_v1()];
            let limit = if strict { self.opts.accept_tol } else { self.opts.rung_tol };
            if sol.residual_dyson > limit {
                return Err(Error::ContinuationStall {
                    last_eta: eta,
                    residual: sol.residual_dyson,
                });
            }
            out.push(sol);
        }
        Ok(out)
    }

    fn polish(&self, tau: f64, v1: CMat, v2: CMat) -> Result<DysonSolution> {
        let it = iterate(self.op, tau, 0.0, v1, v2, &self.opts)?;
        let sol = finish(self.op, tau, 0.0, it.v1, it.v2, it.iterations, it.residual)?;
        if sol.residual_dyson > self.opts.accept_tol {
            return Err(Error::DysonNotConverged {
                eta: 0.0,
                residual: sol.residual_dyson,
                best: Box::new(sol),
            });
        }
        Ok(sol)
    }

    fn initial(&self, warm: Option<&DysonSolution>, eta: f64) -> (CMat, CMat) {
        let n = self.op.dimension();
        if let Some(w) = warm {
            if w.dimension() == n
                && linalg::min_eigenvalue(&w.v1) > 0.0
                && linalg::min_eigenvalue(&w.v2) > 0.0
            {
                return (w.v1.clone(), w.v2.clone());
            }
        }
        // Scale of the solution for large η is 1/η; for small η it is O(1).
        let v = 1.0 / (1.0 + eta);
        (linalg::scalar(n, v), linalg::scalar(n, v))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("tau must be nonnegative, got {tau}")));
    }
    Ok(())
}

/// `solve_at` with a freshly computed spectral radius.
pub fn solve_at(
    op: &CovarianceOperator,
    tau: f64,
    eta: f64,
    warm_start: Option<&DysonSolution>,
) -> Result<DysonSolution> {
    DysonSolver::new(op)?.solve_at(tau, eta, warm_start)
}

pub fn solve_bulk(op: &CovarianceOperator, tau: f64) -> Result<DysonSolution> {
    DysonSolver::new(op)?.solve_bulk(tau)
}

pub fn solve_outside(op: &CovarianceOperator, tau: f64, eta: f64) -> Result<DysonSolution> {
    DysonSolver::new(op)?.solve_outside(tau, eta)
}

struct Iterate {
    v1: CMat,
    v2: CMat,
    residual: f64,
    iterations: usize,
}

/// Intermediate quantities of one residual evaluation.
struct Eval {
    a1: CMat,
    a2: CMat,
    residual: f64,
}

fn u_matrix(tau: f64, a1: &CMat, a2: &CMat) -> Result<CMat> {
    linalg::inverse(&add_scalar(&(a1 * a2), tau), "tau + (eta+S*V1)(eta+SV2)")
}

/// Relative residual of the push-through form `V₁ = U(η+𝒮*V₁)`,
/// `V₂ = (η+𝒮V₂)U`. It is equivalent to the inverse form whenever the latter
/// is defined, and stays meaningful when parts of `V` vanish at `η = 0`.
fn evaluate(op: &CovarianceOperator, tau: f64, eta: f64, v1: &CMat, v2: &CMat) -> Result<Eval> {
    let a1 = add_scalar(&herm(&op.map(v1, true)), eta);
    let a2 = add_scalar(&herm(&op.map(v2, false)), eta);
    let u = u_matrix(tau, &a1, &a2)?;
    let r1 = hs_norm(&(v1 - &u * &a1)) / hs_norm(v1);
    let r2 = hs_norm(&(v2 - &a2 * &u)) / hs_norm(v2);
    let residual = r1.max(r2);
    if !residual.is_finite() {
        return Err(Error::NotPositiveDefinite("non-finite Dyson residual".into()));
    }
    Ok(Eval { a1, a2, residual })
}

/// Balances `(V₁, V₂) → (tV₁, V₂/t)` to equal traces. At `η = 0` this is an
/// exact symmetry of the equations; the trace identity pins it down.
fn balance(v1: &mut CMat, v2: &mut CMat) {
    let t = (avg(v2).re / avg(v1).re).sqrt();
    if t.is_finite() && t > 0.0 {
        *v1 *= c(t);
        *v2 /= c(t);
    }
}

/// One damped alternating sweep. `U(η+𝒮*V₁)` equals
/// `(η + 𝒮V₂ + τ(η+𝒮*V₁)⁻¹)⁻¹` by the push-through identity.
fn sweep(
    op: &CovarianceOperator,
    tau: f64,
    eta: f64,
    v1: &CMat,
    v2: &CMat,
    ev: &Eval,
    theta: f64,
) -> Result<(CMat, CMat)> {
    let u = u_matrix(tau, &ev.a1, &ev.a2)?;
    let new1 = herm(&(&u * &ev.a1));
    let v1n = herm(&(v1 * c(1.0 - theta) + new1 * c(theta)));
    let a1n = add_scalar(&herm(&op.map(&v1n, true)), eta);
    let un = u_matrix(tau, &a1n, &ev.a2)?;
    let new2 = herm(&(&ev.a2 * &un));
    let mut v2n = herm(&(v2 * c(1.0 - theta) + new2 * c(theta)));
    if !linalg::is_pd(&v1n) || !linalg::is_pd(&v2n) {
        return Err(Error::NotPositiveDefinite(format!(
            "Dyson iterate left the positive cone (tau = {tau}, eta = {eta:.3e})"
        )));
    }
    let mut v1n = v1n;
    balance(&mut v1n, &mut v2n);
    Ok((v1n, v2n))
}

/// Fixed-point iteration; switches to Newton–Krylov after `newton_after`
/// sweeps and resumes the fixed point from the best iterate if Newton stalls.
fn iterate(
    op: &CovarianceOperator,
    tau: f64,
    eta: f64,
    v1: CMat,
    v2: CMat,
    opts: &DysonOptions,
) -> Result<Iterate> {
    let first = fixed_point(op, tau, eta, v1, v2, opts, opts.newton_after.min(opts.max_iter))?;
    if first.residual <= opts.tol || first.iterations >= opts.max_iter {
        return Ok(first);
    }
    let nt = newton(op, tau, eta, first.v1.clone(), first.v2.clone(), opts)?;
    let done = first.iterations + nt.iterations;
    let best = if nt.residual < first.residual { nt } else { first };
    if best.residual <= opts.tol || done >= opts.max_iter {
        return Ok(Iterate { iterations: done, ..best });
    }
    let rest = fixed_point(op, tau, eta, best.v1.clone(), best.v2.clone(), opts, opts.max_iter - done)?;
    let total = done + rest.iterations;
    let best = if rest.residual < best.residual { rest } else { best };
    Ok(Iterate { iterations: total, ..best })
}

fn fixed_point(
    op: &CovarianceOperator,
    tau: f64,
    eta: f64,
    mut v1: CMat,
    mut v2: CMat,
    opts: &DysonOptions,
    budget: usize,
) -> Result<Iterate> {
    balance(&mut v1, &mut v2);
    let mut ev = evaluate(op, tau, eta, &v1, &v2)?;
    let mut best = (v1.clone(), v2.clone(), ev.residual);
    let mut best_at = 0;
    let mut theta = opts.damping;
    let mut mixer = Anderson::new(opts.anderson_depth);
    let mut iterations = 0;
    while iterations < budget && ev.residual > opts.tol {
        iterations += 1;
        let (g1, g2) = sweep(op, tau, eta, &v1, &v2, &ev, theta)?;
        let mut next = None;
        let mut rejected = false;
        if let Some((mut x1, mut x2)) = mixer.step(&v1, &v2, &g1, &g2) {
            balance(&mut x1, &mut x2);
            match evaluate(op, tau, eta, &x1, &x2) {
                Ok(e) if e.residual < 10.0 * ev.residual => next = Some((x1, x2, e)),
                _ => rejected = true,
            }
        }
        let (n1, n2, ne) = match next {
            Some(x) => x,
            None => {
                if rejected {
                    mixer.clear();
                }
                let e = evaluate(op, tau, eta, &g1, &g2)?;
                (g1, g2, e)
            }
        };
        if ne.residual > ev.residual {
            theta = (0.5 * theta).max(opts.min_damping);
        }
        v1 = n1;
        v2 = n2;
        ev = ne;
        if ev.residual < 0.9 * best.2 {
            best_at = iterations;
        }
        if ev.residual < best.2 {
            best = (v1.clone(), v2.clone(), ev.residual);
        }
        if iterations - best_at > opts.stall_window {
            break;
        }
    }
    Ok(Iterate {
        v1: best.0,
        v2: best.1,
        residual: best.2,
        iterations,
    })
}

/// Damped Newton–Krylov on the (unsymmetrized) push-through map. Each
/// Jacobian product costs two covariance applications; the Newton update is
/// projected back to Hermitian pairs and balanced.
fn newton(
    op: &CovarianceOperator,
    tau: f64,
    eta: f64,
    mut v1: CMat,
    mut v2: CMat,
    opts: &DysonOptions,
) -> Result<Iterate> {
    let n = v1.nrows();
    let nn = n * n;
    balance(&mut v1, &mut v2);
    let mut ev = evaluate(op, tau, eta, &v1, &v2)?;
    let mut iterations = 0;
    for _ in 0..opts.newton_steps {
        if ev.residual <= opts.tol {
            break;
        }
        let u = u_matrix(tau, &ev.a1, &ev.a2)?;
        let f1 = &v1 - &u * &ev.a1;
        let f2 = &v2 - &ev.a2 * &u;
        let mut rhs: Vec<Complex64> = f1.iter().chain(f2.iter()).map(|z| -z).collect();
        let scale = krylov::norm(&rhs);
        if scale == 0.0 {
            break;
        }
        rhs.iter_mut().for_each(|z| *z /= scale);
        let (a1, a2) = (&ev.a1, &ev.a2);
        // (V₁, −V₂) is the near-symmetry direction: exact at η = 0 and only
        // weakly broken for small η. Shifting it away from zero keeps the
        // Krylov solve well conditioned; the balancing step fixes that
        // component afterwards.
        let mut soft: Vec<Complex64> = v1.iter().copied().chain(v2.iter().map(|z| -z)).collect();
        let sn = krylov::norm(&soft);
        soft.iter_mut().for_each(|z| *z /= sn);
        let mut jvp = |x: &[Complex64]| -> Vec<Complex64> {
            let d1 = CMat::from_column_slice(n, n, &x[..nn]);
            let d2 = CMat::from_column_slice(n, n, &x[nn..]);
            let da1 = op.map(&d1, true);
            let da2 = op.map(&d2, false);
            let du = -(&u * (&da1 * a2 + a1 * &da2) * &u);
            let g1 = &du * a1 + &u * &da1;
            let g2 = &da2 * &u + a2 * &du;
            let mut out: Vec<Complex64> = (d1 - g1).iter().chain((d2 - g2).iter()).copied().collect();
            let proj = krylov::dot(&soft, x);
            out.iter_mut().zip(&soft).for_each(|(o, w)| *o += proj * w);
            out
        };
        let forcing = (1e-3 * ev.residual).clamp(1e-12, 1e-4);
        let sol = krylov::gmres(
            &mut jvp,
            &rhs,
            None,
            krylov::GmresOptions {
                tol: forcing,
                restart: 60,
                max_iter: 600,
            },
        );
        iterations += sol.iterations;
        let dx1 = CMat::from_column_slice(n, n, &sol.x[..nn]) * c(scale);
        let dx2 = CMat::from_column_slice(n, n, &sol.x[nn..]) * c(scale);
        let mut step = 1.0;
        let mut accepted = None;
        while step >= 1.0 / 64.0 {
            let mut x1 = herm(&(&v1 + &dx1 * c(step)));
            let mut x2 = herm(&(&v2 + &dx2 * c(step)));
            if linalg::is_pd(&x1) && linalg::is_pd(&x2) {
                balance(&mut x1, &mut x2);
                if let Ok(e) = evaluate(op, tau, eta, &x1, &x2) {
                    if e.residual < ev.residual {
                        accepted = Some((x1, x2, e));
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((x1, x2, e)) => {
                v1 = x1;
                v2 = x2;
                ev = e;
            }
            None => break,
        }
    }
    Ok(Iterate {
        v1,
        v2,
        residual: ev.residual,
        iterations,
    })
}

fn finish(
    op: &CovarianceOperator,
    tau: f64,
    eta: f64,
    v1: CMat,
    v2: CMat,
    iterations: usize,
    residual: f64,
) -> Result<DysonSolution> {
    let ev = evaluate(op, tau, eta, &v1, &v2)?;
    let u = u_matrix(tau, &ev.a1, &ev.a2)?;
    let residual_u = hs_norm(&(&u * &ev.a1 - &v1)).max(hs_norm(&(&ev.a2 * &u - &v2)));
    Ok(DysonSolution {
        tau,
        eta,
        v1,
        v2,
        u,
        residual_dyson: residual.max(ev.residual),
        residual_u,
        iterations,
        continuation_path: Vec::new(),
        continuation_avg_v1: Vec::new(),
    })
}

/// Anderson mixing on the real vector space of Hermitian pairs.
struct Anderson {
    depth: usize,
    xs: VecDeque<Vec<f64>>,
    gs: VecDeque<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self {
            depth,
            xs: VecDeque::new(),
            gs: VecDeque::new(),
        }
    }

    fn clear(&mut self) {
        self.xs.clear();
        self.gs.clear();
    }

    fn pack(a: &CMat, b: &CMat) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * a.len());
        for z in a.iter().chain(b.iter()) {
            out.push(z.re);
            out.push(z.im);
        }
        out
    }

    fn unpack(v: &[f64], n: usize) -> (CMat, CMat) {
        let half = 2 * n * n;
        let mk = |s: &[f64]| CMat::from_iterator(n, n, s.chunks(2).map(|p| Complex64::new(p[0], p[1])));
        (herm(&mk(&v[..half])), herm(&mk(&v[half..])))
    }

    /// Records `(x, g(x))` and returns the mixed iterate, if any history exists.
    fn step(&mut self, x1: &CMat, x2: &CMat, g1: &CMat, g2: &CMat) -> Option<(CMat, CMat)> {
        if self.depth == 0 {
            return None;
        }
        self.xs.push_back(Self::pack(x1, x2));
        self.gs.push_back(Self::pack(g1, g2));
        if self.xs.len() > self.depth + 1 {
            self.xs.pop_front();
            self.gs.pop_front();
        }
        let m = self.xs.len() - 1;
        if m == 0 {
            return None;
        }
        let d = self.xs[0].len();
        let f = |k: usize, i: usize| self.gs[k][i] - self.xs[k][i];
        let df = DMatrix::from_fn(d, m, |i, k| f(k + 1, i) - f(k, i));
        let fk = DVector::from_fn(d, |i, _| f(m, i));
        let svd = df.svd(true, true);
        let smax = svd.singular_values.max();
        let gamma = svd.solve(&fk, 1e-12 * smax).ok()?;
        let mut out = self.gs[m].clone();
        for (k, gk) in gamma.iter().enumerate() {
            for i in 0..d {
                out[i] -= gk * (self.gs[k + 1][i] - self.gs[k][i]);
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let n = x1.nrows();
        let (y1, y2) = Self::unpack(&out, n);
        if !linalg::is_pd(&y1) || !linalg::is_pd(&y2) {
            return None;
        }
        Some((y1, y2))
    }
}

/// Assembles `M` and the residual `‖1 + (iη + Z + 𝒮_blk M)M‖`.
pub fn assemble_m(
    op: &CovarianceOperator,
    sol: &DysonSolution,
    zeta: Complex64,
) -> Result<BlockSolution> {
    let n = sol.dimension();
    if n != op.dimension() {
        return Err(Error::DimensionMismatch {
            expected: op.dimension(),
            found: n,
        });
    }
    if (zeta.norm_sqr() - sol.tau).abs() > 1e-12 * sol.tau.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "|zeta|^2 = {} does not match tau = {}",
            zeta.norm_sqr(),
            sol.tau
        )));
    }
    let mut m = CMat::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(&sol.v1 * I));
    m.view_mut((n, n), (n, n)).copy_from(&(&sol.v2 * I));
    m.view_mut((0, n), (n, n)).copy_from(&(&sol.u * (-zeta)));
    m.view_mut((n, 0), (n, n)).copy_from(&(sol.u.adjoint() * (-zeta.conj())));

    let mut rhs = CMat::zeros(2 * n, 2 * n);
    let s22 = op.map(&(&sol.v2 * I), false);
    let s11 = op.map(&(&sol.v1 * I), true);
    rhs.view_mut((0, 0), (n, n)).copy_from(&add_scalar_c(&s22, I * sol.eta));
    rhs.view_mut((n, n), (n, n)).copy_from(&add_scalar_c(&s11, I * sol.eta));
    for i in 0..n {
        rhs[(i, n + i)] = zeta;
        rhs[(n + i, i)] = zeta.conj();
    }
    let res = identity(2 * n) + &rhs * &m;
    Ok(BlockSolution {
        zeta,
        eta: sol.eta,
        mde_residual: hs_norm(&res),
        m,
    })
}

fn add_scalar_c(a: &CMat, s: Complex64) -> CMat {
    let mut out = a.clone();
    for i in 0..a.nrows() {
        out[(i, i)] += s;
    }
    out
}

/// Evaluates the algebraic identities of a solution.
pub fn identity_suite(op: &CovarianceOperator, sol: &DysonSolution) -> IdentityReport {
    let (tau, eta) = (c(sol.tau), sol.eta);
    let (v1, v2, u) = (&sol.v1, &sol.v2, &sol.u);
    let sv2 = op.map(v2, false);
    let ssv1 = op.map(v1, true);
    let a2 = add_scalar(&sv2, eta);
    let a1 = add_scalar(&ssv1, eta);
    let ud = u.adjoint();

    let u_equation = hs_norm(&(u - v1 * v2 - u * u * tau));
    let comparison = hs_norm(&(v2 * &a1 - &a2 * v1));
    let u_identity = hs_norm(&(u * &a1 - v1)).max(hs_norm(&(&a2 * u - v2)));
    let im_first = hs_norm(
        &(v1 - (v1 * v1 + u * &ud * tau) * c(eta) - v1 * &sv2 * v1 - u * &ssv1 * &ud * tau),
    );
    let im_second = hs_norm(
        &(v2 - (v2 * v2 + &ud * u * tau) * c(eta) - v2 * &ssv1 * v2 - &ud * &sv2 * u * tau),
    );
    let trace = (avg(v1) - avg(v2)).norm();
    let max = [u_equation, comparison, u_identity, im_first, im_second, trace]
        .into_iter()
        .fold(0.0, f64::max);
    IdentityReport {
        u_equation,
        comparison,
        u_identity,
        im_first,
        im_second,
        trace,
        max,
    }
}
