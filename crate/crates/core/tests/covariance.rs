use dyson_circ::covariance::{random_psd, CovarianceOperator};
use dyson_circ::linalg::{self, inner, min_eigenvalue, hs_norm, CMat};
use dyson_circ::models;
use dyson_circ::rng::GaussianStream;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn random_model(kind: usize, n: usize, seed: u64) -> CovarianceOperator {
    let mut rng = GaussianStream::new(seed, 11);
    match kind {
        0 => CovarianceOperator::averaging(n, 0.5 + rng.uniform()).unwrap(),
        1 => {
            let s = DMatrix::from_fn(n, n, |_, _| rng.uniform());
            CovarianceOperator::variance_profile(s).unwrap()
        }
        2 => {
            let k = 1 + (seed % 3) as usize;
            let coefficients = (0..k)
                .map(|_| CMat::from_fn(n, n, |_, _| rng.complex_normal()))
                .collect();
            CovarianceOperator::kronecker(coefficients).unwrap()
        }
        _ => CovarianceOperator::full_tensor(n, random_psd(n * n, &mut rng)).unwrap(),
    }
}

fn random_matrix(n: usize, rng: &mut GaussianStream) -> CMat {
    CMat::from_fn(n, n, |_, _| rng.complex_normal())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn adjoint_pairing(kind in 0usize..4, n in 1usize..6, seed in any::<u64>()) {
        let op = random_model(kind, n, seed);
        let mut rng = GaussianStream::new(seed, 12);
        let a = random_matrix(n, &mut rng);
        let b = random_matrix(n, &mut rng);
        let lhs = inner(&a, &op.apply(&b, false).unwrap());
        let rhs = inner(&op.apply(&a, true).unwrap(), &b);
        let scale = lhs.norm().max(rhs.norm()).max(1e-300);
        prop_assert!((lhs - rhs).norm() <= 1e-12 * scale, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn cone_is_preserved(kind in 0usize..4, n in 1usize..6, seed in any::<u64>(), adjoint in any::<bool>()) {
        let op = random_model(kind, n, seed);
        let mut rng = GaussianStream::new(seed, 13);
        let a = random_psd(n, &mut rng);
        let image = op.apply(&a, adjoint).unwrap();
        prop_assert!(min_eigenvalue(&image) >= -1e-12 * hs_norm(&a));
    }

    #[test]
    fn scaling_is_linear(kind in 0usize..4, n in 1usize..5, seed in any::<u64>(), lambda in 0.1f64..10.0) {
        let op = random_model(kind, n, seed);
        let mut rng = GaussianStream::new(seed, 14);
        let a = random_matrix(n, &mut rng);
        let direct = op.scaled(lambda).apply(&a, false).unwrap();
        let expected = op.apply(&a, false).unwrap() * linalg::c(lambda);
        prop_assert!(hs_norm(&(direct - &expected)) <= 1e-12 * hs_norm(&expected).max(1.0));
    }
}

#[test]
fn certified_perron_interval() {
    for (name, op) in models::builtin_set().unwrap() {
        let p = op.spectral_radius().unwrap();
        let (lo, hi) = p.collatz_bounds;
        assert!(p.certified, "{name}");
        assert!(hi - lo <= 1e-8 * p.rho, "{name}: [{lo}, {hi}]");
        assert!(lo <= p.rho && p.rho <= hi);
    }
}

#[test]
fn diagonal_coefficient_spectrum() {
    let d = [0.3, 0.8, 1.1, 1.7];
    let op = CovarianceOperator::kronecker(vec![linalg::diagonal(&d)]).unwrap();
    let mut vals: Vec<f64> = linalg::eigenvalues(&op.dense_matrix(false).unwrap())
        .unwrap()
        .into_iter()
        .map(|z| {
            assert!(z.im.abs() <= 1e-14);
            z.re
        })
        .collect();
    vals.sort_by(f64::total_cmp);
    let mut expected: Vec<f64> = d.iter().flat_map(|a| d.iter().map(move |b| a * b)).collect();
    expected.sort_by(f64::total_cmp);
    for (v, e) in vals.iter().zip(&expected) {
        assert!((v - e).abs() <= 1e-12, "{v} vs {e}");
    }
    let rho = op.spectral_radius().unwrap().rho;
    assert!((rho - 1.7 * 1.7).abs() <= 1e-10, "{rho}");
}

#[test]
fn profile_radius_is_perron_root() {
    let mut rng = GaussianStream::new(99, 0);
    for n in [2, 3, 7, 12] {
        let s = DMatrix::from_fn(n, n, |_, _| 0.1 + rng.uniform());
        let root = s
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        let op = CovarianceOperator::variance_profile(s).unwrap();
        let rho = op.spectral_radius().unwrap().rho;
        assert!((rho - root).abs() <= 1e-10 * root, "n {n}: {rho} vs {root}");
    }
    let raw = models::variance_profile_raw().spectral_radius().unwrap().rho;
    assert!((raw - (5.0 + 33f64.sqrt()) / 2.0).abs() <= 1e-10);
}
