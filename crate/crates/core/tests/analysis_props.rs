use fedsim_core::analysis::{
    chi_max, contraction_rate, lyapunov, nu, omega_var, single_loop_lyapunov, solve_reference,
    solve_reference_from, ErgodicTracker, RateReport, TheoryParams, REFERENCE_TOL,
};
use fedsim_core::datasets::{
    logistic_problem_relative_mu, synthesize_logistic, synthesize_quadratic,
};
use fedsim_core::linalg::{dist_sq, norm_sq, pairwise_sum};
use fedsim_core::randomness::{d_estimator, enumerate_subsets, SeededGenerator};
use proptest::prelude::*;

proptest! {
    #[test]
    fn chi_bound_lies_in_half_open_unit_range(n in 2usize..=10_000, frac in 0.0f64..=1.0) {
        let s = 2 + ((n - 2) as f64 * frac) as usize;
        let c = chi_max(n, s).unwrap();
        prop_assert!(c > 0.5 && c <= 1.0);
        prop_assert!((c - (1.0 - nu(n, s).unwrap())).abs() <= 1e-15);
    }

    #[test]
    fn rate_is_below_one_inside_the_conditions(
        kappa in 1.0f64..1e6,
        g in 1e-6f64..1.999_999,
        p in 1e-3f64..=1.0,
        chi_frac in 1e-3f64..=1.0,
        n in 2usize..500,
        s_frac in 0.0f64..=1.0,
    ) {
        let s = 2 + ((n - 2) as f64 * s_frac) as usize;
        let chi = chi_frac * chi_max(n, s).unwrap();
        let c = contraction_rate(g / kappa, 1.0, kappa, p, chi, n, s).unwrap();
        prop_assert!(c < 1.0);
    }

    #[test]
    fn control_weights_agree(gamma in 1e-4f64..10.0, p in 1e-3f64..=1.0, n in 2usize..200, s_frac in 0.0f64..=1.0) {
        let s = 2 + ((n - 2) as f64 * s_frac) as usize;
        let chi = chi_max(n, s).unwrap();
        let a = gamma * (1.0 + omega_var(n, s, p).unwrap()) / (p * chi);
        let b = gamma / (p * p * chi) * (n - 1) as f64 / (s - 1) as f64;
        prop_assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0) * 4.0);
    }

    #[test]
    fn lyapunov_functions_agree_on_consensus(seed in any::<u64>(), s in 2usize..=5, p in 0.05f64..=1.0) {
        let problem = synthesize_quadratic(5, 3, 20.0, seed).unwrap();
        let r = solve_reference(&problem, REFERENCE_TOL).unwrap();
        let mut rng = SeededGenerator::new(seed);
        let xbar: Vec<f64> = (0..3).map(|_| rng.standard_normal()).collect();
        let h: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.standard_normal()).collect()).collect();
        let params = TheoryParams { gamma: 0.01, p, chi: chi_max(5, s).unwrap(), n: 5, s };
        let a = lyapunov(&xbar, &h, &params, &r).unwrap();
        let b = single_loop_lyapunov(&vec![xbar.clone(); 5], &h, &params, &r).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn estimator_is_invariant_to_common_shift(seed in any::<u64>(), shift in -5.0f64..5.0) {
        let mut rng = SeededGenerator::new(seed);
        let xhat: Vec<Vec<f64>> = (0..5).map(|_| (0..2).map(|_| rng.standard_normal()).collect()).collect();
        let shifted: Vec<Vec<f64>> = xhat.iter().map(|v| v.iter().map(|a| a + shift).collect()).collect();
        let omega = rng.sample_subset(5, 3).unwrap();
        let d1 = d_estimator(&xhat, &omega, 0.4, true).unwrap();
        let d2 = d_estimator(&shifted, &omega, 0.4, true).unwrap();
        for (a, b) in d1.iter().zip(&d2) {
            prop_assert!(dist_sq(a, b).sqrt() <= 1e-12 * (1.0 + shift.abs()) * 10.0);
        }
        let total = pairwise_sum(d1.iter().map(Vec::as_slice), 2);
        let scale = d1.iter().map(|v| norm_sq(v).sqrt()).fold(0.0, f64::max);
        prop_assert!(norm_sq(&total).sqrt() <= 1e-12 * scale.max(1e-300));
    }
}

#[test]
fn estimator_second_moment_small_case() {
    let xhat = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
    let wx: f64 = [-1.5f64, -0.5, 0.5, 1.5].iter().map(|v| v * v).sum();
    for p in [0.25, 1.0] {
        let subsets = enumerate_subsets(4, 2).unwrap();
        let mut second = 0.0;
        for omega in &subsets {
            let d = d_estimator(&xhat, omega, p, true).unwrap();
            second += p / subsets.len() as f64 * d.iter().map(|v| norm_sq(v)).sum::<f64>();
        }
        let expected = (1.0 + omega_var(4, 2, p).unwrap()) * wx;
        assert!((second - expected).abs() <= 1e-12 * expected);
    }
}

#[test]
fn reference_solve_is_idempotent() {
    let ds = synthesize_logistic(120, 15, 4, 6).unwrap();
    let (problem, _) = logistic_problem_relative_mu(&ds, 6, 1e-3, None).unwrap();
    let r = solve_reference(&problem, REFERENCE_TOL).unwrap();
    let again = solve_reference_from(&problem, &r.x_star, REFERENCE_TOL).unwrap();
    assert_eq!(again.x_star, r.x_star);
    assert_eq!(again.iterations, 0);
    let sum = pairwise_sum(r.h_star.iter().map(Vec::as_slice), 15);
    let scale = problem.smoothness() * norm_sq(&r.x_star).sqrt().max(1.0);
    assert!(norm_sq(&sum).sqrt() / 6.0 <= REFERENCE_TOL * scale);
}

#[test]
fn experiment_report_matches_formulas() {
    let r = RateReport::for_experiment(107, 50, 1e4, (107.0f64 / 5e5).sqrt()).unwrap();
    assert!((r.p - 0.014_628_7).abs() < 1e-7);
    assert!((r.expected_local_steps - 68.36).abs() < 0.01);
    assert_eq!(r.c, r.gd_factor.max(r.control_factor));
    assert!(r.c < 1.0);
}

#[test]
fn ergodic_tracker_matches_batch_mean() {
    let mut rng = SeededGenerator::new(1);
    let values: Vec<f64> = (0..10_000).map(|_| rng.uniform() * 100.0 - 50.0).collect();
    let mut t = ErgodicTracker::new(1, 1);
    for v in &values {
        t.push(0, &[*v]);
    }
    let batch = values.iter().sum::<f64>() / values.len() as f64;
    assert!((t.mean(0)[0] - batch).abs() <= 1e-12 * batch.abs().max(1.0));
    assert_eq!(t.count(0), 10_000);
}
