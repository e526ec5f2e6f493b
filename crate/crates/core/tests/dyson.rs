use dyson_circ::covariance::random_psd;
use dyson_circ::dyson::{assemble_m, identity_suite, DysonSolution, DysonSolver};
use dyson_circ::linalg::{avg, hs_norm, operator_norm, CMat};
use dyson_circ::models;
use dyson_circ::rng::GaussianStream;
use num_complex::Complex64;

fn rel(a: &CMat, b: &CMat) -> f64 {
    hs_norm(&(a - b)) / hs_norm(b).max(1e-300)
}

fn seeded_start(n: usize, seed: u64) -> DysonSolution {
    let mut rng = GaussianStream::new(seed, 7);
    let shift = |m: CMat| m + dyson_circ::linalg::scalar(n, 0.05);
    DysonSolution {
        tau: 0.0,
        eta: 0.0,
        v1: shift(random_psd(n, &mut rng) * Complex64::new(3.0, 0.0)),
        v2: shift(random_psd(n, &mut rng)),
        u: CMat::zeros(n, n),
        residual_dyson: f64::INFINITY,
        residual_u: f64::INFINITY,
        iterations: 0,
        continuation_path: Vec::new(),
        continuation_avg_v1: Vec::new(),
    }
}

#[test]
fn random_starts_reach_one_solution() {
    for (name, op) in models::builtin_set().unwrap() {
        let solver = DysonSolver::new(&op).unwrap();
        let reference = solver.solve_at(0.4, 0.05, None).unwrap();
        for seed in 1..=5 {
            let start = seeded_start(op.dimension(), seed);
            let sol = solver.solve_at(0.4, 0.05, Some(&start)).unwrap();
            let d = rel(&sol.v1, &reference.v1).max(rel(&sol.v2, &reference.v2));
            assert!(d <= 1e-8, "{name} seed {seed}: {d:e}");
        }
    }
}

#[test]
fn scale_covariance() {
    let op = models::variance_profile_2().unwrap();
    let base = DysonSolver::new(&op).unwrap().solve_at(0.3, 0.2, None).unwrap();
    for lambda in [0.25, 4.0] {
        let scaled = op.scaled(lambda);
        let sol = DysonSolver::new(&scaled)
            .unwrap()
            .solve_at(lambda * 0.3, lambda.sqrt() * 0.2, None)
            .unwrap();
        let k = Complex64::new(lambda.powf(-0.5), 0.0);
        let d = rel(&sol.v1, &(&base.v1 * k)).max(rel(&sol.v2, &(&base.v2 * k)));
        assert!(d <= 1e-8, "lambda {lambda}: {d:e}");
    }

    let op = models::kronecker_pair(6).unwrap();
    let base = DysonSolver::new(&op).unwrap().solve_bulk(0.5).unwrap();
    let scaled = op.scaled(4.0);
    let sol = DysonSolver::new(&scaled).unwrap().solve_bulk(2.0).unwrap();
    let d = rel(&sol.v1, &(&base.v1 * Complex64::new(0.5, 0.0)));
    assert!(d <= 1e-8, "bulk: {d:e}");
}

/// Diagonal fixed point of the 2×2 variance profile, iterated on plain arrays.
fn profile_oracle(s: [[f64; 2]; 2], tau: f64, eta: f64) -> ([f64; 2], [f64; 2]) {
    let (mut a, mut b) = ([1.0f64; 2], [1.0f64; 2]);
    for _ in 0..200_000 {
        let sb = [s[0][0] * b[0] + s[0][1] * b[1], s[1][0] * b[0] + s[1][1] * b[1]];
        let sa = [s[0][0] * a[0] + s[1][0] * a[1], s[0][1] * a[0] + s[1][1] * a[1]];
        let mut na = [0.0; 2];
        let mut nb = [0.0; 2];
        for i in 0..2 {
            na[i] = 1.0 / (eta + sb[i] + tau / (eta + sa[i]));
            nb[i] = 1.0 / (eta + sa[i] + tau / (eta + sb[i]));
        }
        let change = (0..2).map(|i| (na[i] - a[i]).abs() + (nb[i] - b[i]).abs()).sum::<f64>();
        for i in 0..2 {
            a[i] = 0.5 * (a[i] + na[i]);
            b[i] = 0.5 * (b[i] + nb[i]);
        }
        if change < 1e-15 {
            break;
        }
    }
    (a, b)
}

#[test]
fn profile_matches_scalar_pair_iteration() {
    let rho = (5.0 + 33f64.sqrt()) / 2.0;
    let s = [[1.0 / rho, 2.0 / rho], [3.0 / rho, 4.0 / rho]];
    let (a, b) = profile_oracle(s, 0.3, 0.1);
    let op = models::variance_profile_2().unwrap();
    let sol = DysonSolver::new(&op).unwrap().solve_at(0.3, 0.1, None).unwrap();
    for i in 0..2 {
        assert!((sol.v1[(i, i)].re - a[i]).abs() <= 1e-9, "v1[{i}]");
        assert!((sol.v2[(i, i)].re - b[i]).abs() <= 1e-9, "v2[{i}]");
    }
    assert!(sol.v1[(0, 1)].norm() <= 1e-12);
}

#[test]
fn reducible_kronecker_bulk() {
    let op = models::kronecker_diagonal();
    let solver = DysonSolver::new(&op).unwrap();
    let bulk = solver.solve_bulk(0.5).unwrap();
    assert!(bulk.residual_dyson <= 1e-8);
    assert!((bulk.avg_v1() - bulk.avg_v2()).abs() <= 1e-10);
    let near = solver.solve_at(0.5, 1e-9, None).unwrap();
    assert!(rel(&near.v1, &bulk.v1) <= 1e-6, "{:e}", rel(&near.v1, &bulk.v1));
}

#[test]
fn outside_spectrum() {
    let op = models::circular(4);
    let solver = DysonSolver::new(&op).unwrap();
    let sol = solver.solve_outside(2.0, 0.01).unwrap();
    let v = sol.avg_v1();
    assert!((0.001..=0.02).contains(&v), "{v}");

    let sol = solver.solve_outside(1.5, 1e-6).unwrap();
    let path = &sol.continuation_avg_v1;
    assert!(path.len() >= 5);
    assert!(path.windows(2).all(|w| w[1] <= w[0]), "{path:?}");
    assert!(*path.last().unwrap() < 1e-5);
}

fn scale_function(tau: f64, eta: f64) -> f64 {
    if eta >= 1.0 {
        eta / (eta * eta + tau)
    } else if tau <= 1.0 {
        (1.0 - tau).sqrt() + eta.powf(1.0 / 3.0)
    } else {
        eta / (tau - 1.0 + eta.powf(2.0 / 3.0))
    }
}

#[test]
fn scale_function_bounds() {
    let points = [
        (0.0, 1e-3),
        (0.5, 0.1),
        (0.95, 1e-3),
        (1.0, 0.01),
        (1.2, 1e-3),
        (2.0, 0.1),
        (4.0, 0.5),
        (0.0, 1.0),
        (0.5, 3.0),
        (2.0, 10.0),
    ];
    for (name, op) in models::builtin_set().unwrap() {
        let solver = DysonSolver::new(&op).unwrap();
        let mut warm: Option<DysonSolution> = None;
        for &(tau, eta) in &points {
            let sol = solver.solve_at(tau, eta, warm.as_ref()).unwrap();
            let ratio = sol.avg_v1() / scale_function(tau, eta);
            assert!((0.1..=10.0).contains(&ratio), "{name} tau {tau} eta {eta}: {ratio}");
            assert!((sol.avg_v1() - sol.avg_v2()).abs() <= 1e-10);
            warm = Some(sol);
        }
    }
}

#[test]
fn block_solution_against_coupled_system() {
    for (name, op) in models::builtin_set().unwrap() {
        let solver = DysonSolver::new(&op).unwrap();
        for tau in [0.1, 0.5, 0.8] {
            let sol = solver.solve_bulk(tau).unwrap();
            let zeta = Complex64::from_polar(tau.sqrt(), 0.7);
            let block = assemble_m(&op, &sol, zeta).unwrap();
            let bound = (10.0 * sol.residual_dyson).max(1e-12);
            assert!(block.mde_residual <= bound, "{name} tau {tau}: {:e}", block.mde_residual);
            let norm = operator_norm(&block.m);
            assert!(norm <= 10.0 / (1.0 + tau.sqrt()), "{name} tau {tau}: {norm}");
        }
    }
    assert!(assemble_m(&models::circular(2), &circular_bulk(), Complex64::new(1.0, 0.0)).is_err());
}

fn circular_bulk() -> DysonSolution {
    DysonSolver::new(&models::circular(2)).unwrap().solve_bulk(0.5).unwrap()
}

#[test]
fn identity_suite_tracks_residual() {
    let circ = models::circular(5);
    let sol = DysonSolver::new(&circ).unwrap().solve_bulk(0.3).unwrap();
    assert!(identity_suite(&circ, &sol).max <= 1e-10);

    for op in [models::variance_profile_2().unwrap(), models::variance_profile_16().unwrap()] {
        let solver = DysonSolver::new(&op).unwrap();
        for (tau, eta) in [(0.2, 0.0), (0.6, 0.0), (0.4, 0.05)] {
            let sol = if eta == 0.0 {
                solver.solve_bulk(tau).unwrap()
            } else {
                solver.solve_at(tau, eta, None).unwrap()
            };
            let report = identity_suite(&op, &sol);
            let bound = (100.0 * sol.residual_dyson).max(1e-12);
            assert!(report.max <= bound, "tau {tau}: {:e} vs {:e}", report.max, sol.residual_dyson);
            assert!(report.trace <= 1e-10);
        }
    }
}

#[test]
fn trace_identity_along_sweep() {
    let op = models::kronecker_pair(8).unwrap();
    let solver = DysonSolver::new(&op).unwrap();
    let mut prev = solver.solve_bulk(0.05).unwrap();
    for k in 2..=19 {
        let sol = solver.solve_bulk_from(0.05 * k as f64, &prev).unwrap();
        assert!((avg(&sol.v1) - avg(&sol.v2)).norm() <= 1e-10, "step {k}");
        prev = sol;
    }
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

    #[test]
    fn trace_identity_at_random_points(tau in 0.0f64..3.0, eta in 1e-3f64..2.0) {
        let op = models::variance_profile_16().unwrap();
        let sol = DysonSolver::with_rho(&op, 1.0, Default::default())
            .solve_at(tau, eta, None)
            .unwrap();
        proptest::prop_assert!((sol.avg_v1() - sol.avg_v2()).abs() <= 1e-10);
        proptest::prop_assert!(identity_suite(&op, &sol).max <= (100.0 * sol.residual_dyson).max(1e-12));
    }
}
