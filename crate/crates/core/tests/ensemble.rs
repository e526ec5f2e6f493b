use std::sync::OnceLock;

use dyson_circ::covariance::{ModelDocument, ModelSpec};
use dyson_circ::density::{sigma_profile, DensityProfile, GridSpec};
use dyson_circ::dyson::{assemble_m, DysonSolver};
use dyson_circ::ensemble::*;
use dyson_circ::io::ComplexMatrixJson;
use dyson_circ::linalg::{c, diagonal, identity, CMat};
use dyson_circ::rng::GaussianStream;
use dyson_circ::{models, Error};
use num_complex::Complex64;

fn ginibre_spec(n: usize, seed: u64) -> EnsembleSpec {
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

struct Fixture {
    x: CMat,
    spectrum: EmpiricalSpectrum,
}

fn ginibre_512() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let spec = ginibre_spec(512, 2024);
        let x = sample(&spec, 0).unwrap();
        let spectrum = spectrum(&x).unwrap();
        Fixture { x, spectrum }
    })
}

fn circular_profile() -> &'static DensityProfile {
    static CELL: OnceLock<DensityProfile> = OnceLock::new();
    CELL.get_or_init(|| sigma_profile(&models::circular(1), &GridSpec::uniform(32)).unwrap())
}

#[test]
fn averaging_entries_have_variance_one_over_n() {
    let x = sample(&ginibre_spec(4, 11), 0).unwrap();
    let mean = x.iter().map(|z| z.norm_sqr()).sum::<f64>() / 16.0 * 4.0;
    assert!((0.5..=1.5).contains(&mean), "{mean}");
    let big = sample(&ginibre_spec(200, 11), 0).unwrap();
    let mean = big.iter().map(|z| z.norm_sqr()).sum::<f64>() / 200.0;
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
}

#[test]
fn same_seed_gives_identical_samples() {
    let spec = EnsembleSpec { samples: 3, ..ginibre_spec(8, 5) };
    let a = samples(&spec).unwrap();
    let b = samples(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[2], sample(&spec, 2).unwrap());
}

#[test]
fn full_tensor_with_diagonal_kappa_has_uncorrelated_entries() {
    let var = [1.0, 2.0, 0.5, 1.5];
    let spec = EnsembleSpec {
        model: ModelDocument {
            model: ModelSpec::FullTensor {
                kappa: ComplexMatrixJson::from_matrix(&diagonal(&var)),
            },
            dimension: 2,
        },
        field: Field::Complex,
        n: 2,
        seed: 77,
        samples: 10_000,
    };
    let xs = samples(&spec).unwrap();
    let m = xs.len() as f64;
    let entries = |x: &CMat| [x[(0, 0)], x[(0, 1)], x[(1, 0)], x[(1, 1)]];
    let mut cov = [[Complex64::ZERO; 4]; 4];
    for x in &xs {
        let e = entries(x);
        for i in 0..4 {
            for j in 0..4 {
                cov[i][j] += e[i] * e[j].conj() / m;
            }
        }
    }
    for i in 0..4 {
        assert!((cov[i][i].re / var[i] - 1.0).abs() < 0.1, "variance {i}: {}", cov[i][i]);
        for j in 0..4 {
            if i != j {
                let corr = cov[i][j].norm() / (cov[i][i].re * cov[j][j].re).sqrt();
                assert!(corr <= 0.1, "corr({i},{j}) = {corr}");
            }
        }
    }
}

#[test]
fn lifted_variance_profile_is_block_constant() {
    let op = models::variance_profile_raw();
    let spec = EnsembleSpec {
        model: op.to_document(),
        ..ginibre_spec(200, 3)
    };
    let x = sample(&spec, 0).unwrap();
    let k = 100;
    for (bi, bj, s) in [(0, 0, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 1, 4.0)] {
        let v = x.view((bi * k, bj * k), (k, k)).iter().map(|z| z.norm_sqr()).sum::<f64>()
            / (k * k) as f64
            * k as f64;
        assert!((v / s - 1.0).abs() < 0.05, "block ({bi},{bj}): {v}");
    }
    assert!(matches!(sample(&EnsembleSpec { n: 201, ..spec }, 0), Err(Error::InvalidArgument(_))));
}

#[test]
fn lifted_kronecker_covariance() {
    let op = models::kronecker_pair(4).unwrap();
    let spec = EnsembleSpec {
        model: op.to_document(),
        samples: 400,
        ..ginibre_spec(8, 21)
    };
    let b = CMat::from_fn(4, 4, |i, j| Complex64::new(1.0 + (i * j) as f64, i as f64 - j as f64));
    let lifted = b.kronecker(&identity(2));
    let mut acc = CMat::zeros(8, 8);
    for x in samples(&spec).unwrap() {
        acc += &x * &lifted * x.adjoint();
    }
    acc /= c(400.0);
    let expected = op.apply(&b, false).unwrap().kronecker(&identity(2));
    let err = (&acc - &expected).norm() / expected.norm();
    assert!(err < 0.15, "{err}");
}

#[test]
fn spectrum_of_simple_matrices() {
    let s = spectrum(&CMat::zeros(3, 3)).unwrap();
    assert!(s.eigenvalues.iter().all(|z| z.norm() == 0.0));
    let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), Complex64::new(0.0, 2.0)]));
    let mut ev = spectrum(&d).unwrap().eigenvalues;
    ev.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    assert!((ev[0] - c(1.0)).norm() < 1e-14 && (ev[1] - Complex64::new(0.0, 2.0)).norm() < 1e-14);
    let csv = spectrum(&d).unwrap().to_csv();
    assert!(csv.starts_with("re,im\n"));
}

#[test]
fn ginibre_512_fixtures() {
    let fx = ginibre_512();
    assert_eq!(fx.spectrum.len(), 512);
    let out = outlier_check(&fx.spectrum, 1.0, 0.1);
    assert!(out.pass && out.max_abs_sq <= 1.1, "{out:?}");
    let radial = circular_radial_distance(&fx.spectrum);
    assert!(radial.distance <= 0.05, "{radial:?}");
    let via_profile = radial_distance(&fx.spectrum, circular_profile());
    assert!((via_profile.distance - radial.distance).abs() < 1e-6);
    let z = Complex64::new(0.3, 0.0);
    assert!(small_singular_count(&fx.x, z, 0.05).unwrap() as f64 <= 3.0 * 512.0 * 0.05);
    let deloc = delocalization_check(&fx.x, 1.0, 0.1, 16, 7, 0.25).unwrap();
    assert!(deloc.pass && deloc.max_overlap <= 512f64.powf(-0.25), "{deloc:?}");
}

#[test]
fn resolvent_matches_the_dyson_solution() {
    let op = models::circular(1);
    let solver = DysonSolver::new(&op).unwrap();
    let x = sample(&ginibre_spec(256, 8), 0).unwrap();
    let z = Complex64::new(0.3, 0.0);
    let m = assemble_m(&op, &solver.solve_at(0.09, 1.0, None).unwrap(), z).unwrap();
    assert!(resolvent_check(&x, z, 1.0, &m).unwrap() <= 10.0 / 256.0);

    let eta = 1e6;
    let m = assemble_m(&op, &solver.solve_at(0.09, eta, None).unwrap(), z).unwrap();
    assert!(resolvent_check(&x, z, eta, &m).unwrap() <= 1e-6);
    assert!((m.avg() - Complex64::new(0.0, 1.0 / eta)).norm() < 1e-9 / eta);

    let far = Complex64::new(3.0, 0.0);
    let g = resolvent_trace(&x, far, 0.01).unwrap();
    let ratio = g.im / 0.01;
    assert!(ratio > 0.05 && ratio < 1.0, "{ratio}");
}

#[test]
fn small_singular_counts() {
    let z = Complex64::new(0.4, -0.2);
    let x = identity(6) * (z + 1.0);
    assert_eq!(small_singular_count(&x, z, 0.5).unwrap(), 0);
    let g = sample(&ginibre_spec(20, 1), 0).unwrap();
    assert_eq!(small_singular_count(&g, z, 100.0).unwrap(), 40);
}

#[test]
fn delocalization_counterexamples() {
    let x = diagonal(&[0.1, 0.2, 0.3, 0.4]);
    let r = delocalization_check(&x, 1.0, 0.1, 3, 1, 0.25).unwrap();
    assert!((r.max_overlap - 1.0).abs() < 1e-12 && !r.pass);
    assert!(matches!(delocalization_check(&x, 1.0, 0.1, 0, 1, 0.25), Err(Error::InvalidArgument(_))));
}

#[test]
fn smallest_singular_guard_cases() {
    let z = Complex64::new(0.1, 0.1);
    assert!(smallest_singular_guard(&(identity(5) * (z + 1.0)), z, 0.5).unwrap().pass);
    let mut y = identity(5) * (z + 1.0);
    for i in 0..5 {
        y[(i, 2)] = z * if i == 2 { 1.0 } else { 0.0 };
    }
    assert!(!smallest_singular_guard(&y, z, 0.5).unwrap().pass);
    let fx = ginibre_512();
    let mut rng = GaussianStream::new(99, 0);
    for _ in 0..100 {
        let z = Complex64::from_polar(0.9 * rng.uniform().sqrt(), 2.0 * std::f64::consts::PI * rng.uniform());
        assert!(smallest_singular_guard(&fx.x, z, 0.5).unwrap().pass);
    }
}

#[test]
fn girko_at_zero_matrix_recovers_the_bump_value() {
    let b = Bump::new(Complex64::ZERO, 0.8);
    let r = girko_statistic(&CMat::zeros(4, 4), &b, &GirkoOptions { points: 400, seed: 3, ..Default::default() })
        .unwrap();
    assert_eq!(r.direct, 1.0);
    assert!(r.gap < 0.02, "{r:?}");
}

#[test]
fn girko_routes_agree_on_ginibre_512() {
    let fx = ginibre_512();
    let b = Bump::new(Complex64::ZERO, 0.8);
    let r = girko_statistic(&fx.x, &b, &GirkoOptions { points: 48, seed: 1, ..Default::default() }).unwrap();
    let exact = integrate_against_density(&|z| b.value(z), b.center, b.radius, &|t| {
        profile_density(circular_profile(), t)
    });
    assert!((exact - 0.128).abs() < 1e-10);
    assert!(r.gap <= 0.02, "{r:?}");
    assert!((r.direct - exact).abs() <= 0.02 && (r.hermitized - exact).abs() <= 0.02, "{r:?}");
    assert!(!r.low_confidence);
    let one = girko_statistic(&fx.x, &b, &GirkoOptions { points: 1, seed: 1, ..Default::default() }).unwrap();
    assert!(one.low_confidence);
}

#[test]
fn outlier_check_flags_non_model_matrices() {
    let r = outlier_check(&spectrum(&(identity(3) * c(10.0))).unwrap(), 1.0, 0.0);
    assert!(!r.pass && (r.excess - 99.0).abs() < 1e-9);
    let small = sample_spectrum(&ginibre_spec(16, 4), 0).unwrap();
    assert!(outlier_check(&small, 1.0, 0.5).pass);
    assert_eq!(small.spec.as_ref().unwrap().n, 16);
}

#[test]
fn local_and_global_windows() {
    let spec = ginibre_spec(1024, 31);
    let s = sample_spectrum(&spec, 0).unwrap();
    let profile = circular_profile();
    let b = Bump::new(Complex64::ZERO, 0.8);
    let w = local_window_statistic(&s, profile, Complex64::ZERO, 0.2, &Bump::new(Complex64::ZERO, 1.0), 0.1).unwrap();
    assert!(w.gap <= 5.0 * w.scale, "{w:?}");
    let global = local_window_statistic(&s, profile, Complex64::ZERO, 0.0, &b, 0.1).unwrap();
    let direct = s.eigenvalues.iter().map(|z| b.value(*z)).sum::<f64>() / 1024.0;
    assert!((global.empirical - direct).abs() < 1e-14);
    assert!(local_window_statistic(&s, profile, Complex64::new(0.99, 0.0), 0.2, &b, 0.1).is_err());
    let ang = angular_uniformity(&s);
    assert!(ang.pass, "{ang:?}");
}
