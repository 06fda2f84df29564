mod common;

use common::*;
use dpfc::bounds::{
    exact_error_for_covariance, exact_steady_state_error, noise_covariance, noise_variances, steady_state_bound,
};
use dpfc::dynamics::NoiseModel;
use dpfc::privacy::{is_adjacent, kappa, q_function, q_inverse, LN_3};
use dpfc::sensitivity::SensitivityPoint;
use dpfc::{PerronMatrix, PrivacyParams, Topology, WeightedGraph};

#[test]
fn q_function_matches_quadrature() {
    for k in 0..=60 {
        let y = k as f64 * 0.125;
        let (got, want) = (q_function(y), q_quadrature(y));
        assert!((got - want).abs() <= 1e-12, "y = {y}: {got} vs {want}");
    }
}

#[test]
fn q_function_reference_values() {
    // Standard normal table values.
    assert!((q_function(3.0) - 0.001_349_898_031_630_1).abs() < 1e-15);
    assert!((q_function(1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
    assert_eq!(q_function(0.0), 0.5);
    assert!((q_function(-1.0) - (1.0 - 0.158_655_253_931_457_05)).abs() < 1e-15);
}

#[test]
fn q_inverse_matches_bisection() {
    for delta in [0.3, 0.1, 0.05, 0.01, 0.00135, 1e-4, 1e-6, 1e-9] {
        let (got, want) = (q_inverse(delta).unwrap(), q_inverse_bisection(delta));
        assert!((got - want).abs() < 1e-9, "delta {delta}: {got} vs {want}");
    }
    assert!((q_inverse(0.01).unwrap() - 2.326_347_874_040_841).abs() < 1e-12);
}

#[test]
fn kappa_reference_values() {
    let k = q_inverse_bisection(0.00135);
    let want = (k + (k * k + 2.0 * LN_3).sqrt()) / (2.0 * LN_3);
    assert!((kappa(0.00135, LN_3).unwrap() - want).abs() < 1e-9);
    assert!((want - 2.888_27).abs() < 1e-5);
    let k = q_inverse_bisection(0.01);
    let want = (k + (k * k + 0.2).sqrt()) / 0.2;
    assert!((kappa(0.01, 0.1).unwrap() - want).abs() < 1e-8);
    assert!((want - 23.4765).abs() < 1e-4);
}

#[test]
fn star_demo_bound_value() {
    let g = WeightedGraph::standard(Topology::Star, 5, 1.0).unwrap();
    let params = PrivacyParams::new(LN_3, 0.00135, 2.0).unwrap();
    let k = q_inverse_bisection(0.00135);
    let sigma = 2.0 * (k + (k * k + 2.0 * LN_3).sqrt()) / (2.0 * LN_3);
    // γ(N−1)²σ² / (N λ2 (2 − γλ2)) with γ = 0.2, N = 5, λ2 = 1.
    let want = 0.2 * 16.0 * sigma * sigma / (5.0 * 1.8);
    let got = steady_state_bound(&g, 0.2, &[params; 5]).unwrap();
    assert!((got - want).abs() < 1e-9 * want);
    assert!((got - 11.8643).abs() < 1e-4);
}

#[test]
fn kemeny_matches_fundamental_matrix() {
    for case in 0..40 {
        let (g, gamma, _) = random_case(case);
        let p = PerronMatrix::new(&g, gamma).unwrap();
        let got = p.kemeny().unwrap();
        let want = kemeny_fundamental(p.matrix());
        assert!((got - want).abs() < 1e-9 * want, "case {case}: {got} vs {want}");
        let got2 = p.kemeny_squared().unwrap();
        let want2 = kemeny_fundamental(&p.squared());
        assert!((got2 - want2).abs() < 1e-9 * want2, "case {case}: {got2} vs {want2}");
    }
}

#[test]
fn exact_error_matches_direct_lyapunov_solve() {
    for case in 0..40 {
        let (g, gamma, sigmas) = random_case(case);
        let p = PerronMatrix::new(&g, gamma).unwrap();
        let z = noise_variances(&p, &sigmas).unwrap();
        let got = exact_steady_state_error(&p, &z).unwrap();
        let want = exact_diagonal(&p, &sigmas);
        assert!((got - want).abs() < 1e-9 * want, "case {case}: {got} vs {want}");

        let cov = noise_covariance(&p, &sigmas, NoiseModel::Broadcast).unwrap();
        let got = exact_error_for_covariance(&p, &cov).unwrap();
        let want = exact_broadcast(&g, &p, &sigmas);
        assert!((got - want).abs() < 1e-9 * want, "case {case}: {got} vs {want}");
    }
}

#[test]
fn adjacency_matches_norm() {
    let v: Vec<f64> = (0..50).map(|k| (k as f64 * 0.37).sin()).collect();
    let w: Vec<f64> = (0..50).map(|k| (k as f64 * 0.37).sin() + 0.1 * (k as f64).cos()).collect();
    let diff: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a - b).collect();
    let norm = l2_norm_pairwise(&diff);
    assert!(is_adjacent(&v, &w, norm * (1.0 + 1e-12)).unwrap());
    assert!(!is_adjacent(&v, &w, norm * (1.0 - 1e-9)).unwrap());
}

#[test]
fn partials_match_finite_differences() {
    for &eps in &[0.05, 0.2, 0.7] {
        for &l2 in &[0.5, 3.0, 8.0] {
            let p = SensitivityPoint::with_k_delta(eps, 3.0, 1.0, 0.1, 10, l2).unwrap();
            let de = derivative(
                |e| SensitivityPoint::with_k_delta(e, 3.0, 1.0, 0.1, 10, l2).unwrap().bound(),
                eps,
            );
            let dl = derivative(
                |l| SensitivityPoint::with_k_delta(eps, 3.0, 1.0, 0.1, 10, l).unwrap().bound(),
                l2,
            );
            assert!((p.d_epsilon() - de).abs() < 1e-6 * de.abs(), "{eps},{l2}");
            assert!((p.d_lambda2() - dl).abs() < 1e-6 * dl.abs(), "{eps},{l2}");
        }
    }
}
