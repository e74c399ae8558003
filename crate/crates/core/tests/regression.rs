//! Scalar gradient benchmark against the series oracle.

use poisson_relax::regression::{
    default_tau_grid, estimate_scalar_grad, exact_scalar_grad, mae_cell, optimal_tau, scalar_grad_draws,
    EstimatorSettings, TestFunction,
};
use poisson_relax::sampling::RngStream;
use poisson_relax::Method;

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn score_estimates_are_unbiased() {
    let settings = EstimatorSettings::default();
    for (i, f) in [TestFunction::Z, TestFunction::ZSq, TestFunction::CosSq].into_iter().enumerate() {
        for (j, rate) in [2.0, 20.0].into_iter().enumerate() {
            let mut rng = RngStream::with_stream(60, (10 * i + j) as u64);
            let draws = scalar_grad_draws(f, rate, Method::Score, 0.0, 100_000, &settings, &mut rng).unwrap();
            let (m, se) = mean_se(&draws);
            let exact = exact_scalar_grad(f, rate).unwrap();
            assert!((m - exact).abs() <= 4.0 * se, "{} λ={rate}: {m} ± {se} vs {exact}", f.name());
        }
    }
}

#[test]
fn cubic_estimate_of_identity_is_unbiased_up_to_unit_temperature() {
    let settings = EstimatorSettings::default();
    for (i, tau) in [0.05, 0.3, 1.0].into_iter().enumerate() {
        let mut rng = RngStream::with_stream(61, i as u64);
        let draws = scalar_grad_draws(TestFunction::Z, 20.0, Method::EatCubic, tau, 100_000, &settings, &mut rng).unwrap();
        let (m, se) = mean_se(&draws);
        assert!((m - 1.0).abs() <= 4.0 * se, "τ={tau}: {m} ± {se}");
    }
}

#[test]
fn exact_method_delegates_to_the_series() {
    let mut rng = RngStream::new(62);
    for f in TestFunction::ALL {
        let est = estimate_scalar_grad(f, 3.0, Method::Exact, 0.4, 5, &mut rng).unwrap();
        assert_eq!(est, exact_scalar_grad(f, 3.0).unwrap());
    }
}

#[test]
fn mae_falls_with_more_draws() {
    let settings = EstimatorSettings::default();
    for method in [Method::EatCubic, Method::Score] {
        let maes: Vec<f64> = [10, 100, 1000]
            .iter()
            .map(|&n| mae_cell(TestFunction::Z, method, 20.0, 0.3, n, 20, &settings, 63).unwrap().mae)
            .collect();
        assert!(maes[0] > maes[1] && maes[1] > maes[2], "{method}: {maes:?}");
    }
}

#[test]
fn sigmoid_mae_grows_with_temperature() {
    let settings = EstimatorSettings::default();
    let maes: Vec<f64> = [0.1, 0.5, 1.0]
        .iter()
        .map(|&tau| mae_cell(TestFunction::Z, Method::EatSigmoid, 20.0, tau, 100, 20, &settings, 64).unwrap().mae)
        .collect();
    assert!(maes[0] < maes[1] && maes[1] < maes[2], "{maes:?}");
}

#[test]
fn optimal_temperature_is_reproducible() {
    let settings = EstimatorSettings::default();
    let grid = default_tau_grid();
    let a = optimal_tau(TestFunction::ZSq, 5.0, Method::EatCubic, &grid, 50, 10, &settings, 65).unwrap();
    let b = optimal_tau(TestFunction::ZSq, 5.0, Method::EatCubic, &grid, 50, 10, &settings, 65).unwrap();
    assert_eq!(a, b);
    assert!(grid.contains(&a.0));
    assert_eq!(optimal_tau(TestFunction::Z, 5.0, Method::Gsm, &[0.3], 10, 3, &settings, 65).unwrap().0, 0.3);
}
