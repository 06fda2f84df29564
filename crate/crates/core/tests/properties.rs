mod common;

use common::random_case;
use dpfc::bounds::{
    bound_surface, epsilon_threshold, exact_steady_state_error, kemeny_sandwich, kemeny_squared_bounds, linspace,
    noise_variances, ThresholdProblem,
};
use dpfc::dynamics::{network_noise, network_step, node_step, FormationSpec, NoiseModel, Simulation};
use dpfc::graph::CONNECTIVITY_TOL;
use dpfc::privacy::{kappa, q_function, q_inverse, sample_noise, stream_rng, GaussianMechanism};
use dpfc::{PerronMatrix, WeightedGraph};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn arbitrary_graph(seed: u64, n: usize, p: f64) -> WeightedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j, 1.0 - 0.9 * rng.random::<f64>()));
            }
        }
    }
    WeightedGraph::new(n, edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn q_inverse_inverts_q(y in 1e-6f64..6.0) {
        let back = q_inverse(q_function(y)).unwrap();
        prop_assert!((back - y).abs() < 1e-9, "{y} -> {back}");
    }

    #[test]
    fn kappa_decreases_in_epsilon_and_delta(
        eps in 0.01f64..5.0,
        factor in 1.001f64..3.0,
        delta in 1e-8f64..0.4,
    ) {
        prop_assert!(kappa(delta, eps * factor).unwrap() < kappa(delta, eps).unwrap());
        let bigger = (delta * factor).min(0.49);
        if bigger > delta {
            prop_assert!(kappa(bigger, eps).unwrap() < kappa(delta, eps).unwrap());
        }
    }

    #[test]
    fn lambda2_positive_iff_connected(seed in any::<u64>(), n in 2usize..=50, p in 0.0f64..0.3) {
        let g = arbitrary_graph(seed, n, p);
        let l2 = g.algebraic_connectivity().unwrap();
        prop_assert_eq!(l2 > CONNECTIVITY_TOL, g.is_connected(), "lambda2 = {}", l2);
    }

    #[test]
    fn perron_second_eigenvalue(case in 0u64..10_000) {
        let (g, gamma, _) = random_case(case);
        let p = PerronMatrix::new(&g, gamma).unwrap();
        let eig = p.eigenvalues().unwrap();
        prop_assert!((eig[1] - (1.0 - gamma * p.lambda2())).abs() < 1e-10);
    }

    #[test]
    fn perron_is_doubly_stochastic_with_uniform_stationary(case in 0u64..10_000) {
        let (g, gamma, _) = random_case(case);
        let p = PerronMatrix::new(&g, gamma).unwrap();
        let m = p.matrix();
        for i in 0..m.nrows() {
            prop_assert!((m.row(i).sum() - 1.0).abs() <= 1e-12);
            prop_assert!((m.column(i).sum() - 1.0).abs() <= 1e-12);
        }
        let pi = p.stationary_distribution().unwrap();
        let n = pi.len() as f64;
        prop_assert!(pi.iter().all(|&v| (v - 1.0 / n).abs() < 1e-15));
    }

    #[test]
    fn kemeny_sandwich_holds(case in 0u64..10_000) {
        let (g, gamma, sigmas) = random_case(case);
        let p = PerronMatrix::new(&g, gamma).unwrap();
        let n = g.node_count();
        let (lo, hi) = kemeny_squared_bounds(n, gamma, p.lambda2());
        let k = p.kemeny_squared().unwrap();
        prop_assert!(lo < k && k <= hi * (1.0 + 1e-12), "{lo} < {k} <= {hi}");
        let z = noise_variances(&p, &sigmas).unwrap();
        let exact = exact_steady_state_error(&p, &z).unwrap();
        let sw = kemeny_sandwich(&p, &z).unwrap();
        prop_assert!(sw.lower <= exact * (1.0 + 1e-9) && exact <= sw.upper * (1.0 + 1e-9));
    }

    #[test]
    fn node_and_network_updates_agree(case in 0u64..10_000, seed in any::<u64>()) {
        let (g, gamma, _) = random_case(case);
        let p = PerronMatrix::new(&g, gamma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = g.node_count();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let node = node_step(&x, &p, &v);
        let z = network_noise(&p, &v);
        let net = network_step(&x, &p, &z);
        for (a, b) in node.iter().zip(&net) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        // Consensus mean moves only by the injected noise.
        let drift = node.iter().sum::<f64>() - x.iter().sum::<f64>() - z.iter().sum::<f64>();
        prop_assert!(drift.abs() <= 1e-12 * x.iter().map(|v| v.abs()).sum::<f64>().max(1.0));
    }

    #[test]
    fn multi_dimensional_run_equals_scalar_runs(
        case in 0u64..10_000,
        dims in 1usize..4,
        seed in any::<u64>(),
        per_link in any::<bool>(),
    ) {
        let (g, gamma, sigmas) = random_case(case);
        let n = g.node_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dims).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let init = DMatrix::from_fn(n, dims, |_, _| rng.random_range(-30.0..30.0));
        let model = if per_link { NoiseModel::PerLink } else { NoiseModel::Broadcast };
        let sim = Simulation::new(&g, gamma, &sigmas, FormationSpec::from_rows(&rows).unwrap())
            .unwrap()
            .with_horizon(40)
            .with_seed(seed)
            .with_noise_model(model)
            .with_initial(init)
            .unwrap();
        let run = sim.run_trial(3).unwrap();
        for l in 0..dims {
            let scalar = sim.run_scalar(3, l).unwrap();
            for (k, x) in scalar.states.iter().enumerate() {
                for i in 0..n {
                    prop_assert_eq!(run.states[k][(i, l)], x[i]);
                }
            }
            prop_assert_eq!(&run.metrics.e_agg_by_dim[l], &scalar.e_agg);
        }
    }

    #[test]
    fn threshold_meets_target(
        l2 in 0.01f64..50.0,
        n in 2usize..2000,
        delta in 1e-6f64..0.1,
        b in 0.1f64..10.0,
        e_r in 1e-3f64..1e4,
    ) {
        let gamma = 1.0 / (2.0 * l2 + 1.0);
        let problem = ThresholdProblem { lambda2: l2, n, gamma, delta, b, e_r };
        let eps = epsilon_threshold(&problem).unwrap();
        let at = problem.bound_at(eps, q_inverse(delta).unwrap()).unwrap();
        prop_assert!((at - e_r).abs() <= 1e-8 * e_r, "bound {at} vs {e_r}");
        let looser = epsilon_threshold(&ThresholdProblem { e_r: e_r * 2.0, ..problem }).unwrap();
        prop_assert!(looser < eps);
    }

    #[test]
    fn threshold_decreases_with_connectivity(l2 in 0.01f64..4.0, step in 0.01f64..4.0, n in 2usize..500) {
        let gamma = 0.1;
        let make = |lambda2| ThresholdProblem { lambda2, n, gamma, delta: 0.01, b: 5.0, e_r: 100.0 };
        let a = epsilon_threshold(&make(l2)).unwrap();
        let b = epsilon_threshold(&make(l2 + step)).unwrap();
        prop_assert!(b < a);
    }

    #[test]
    fn single_cell_surface_equals_bound(eps in 0.05f64..2.0, l2 in 0.1f64..49.0) {
        let s = bound_surface(&[eps], &[l2], 50, 0.01, 5.0, 0.02).unwrap();
        let problem = ThresholdProblem { lambda2: l2, n: 50, gamma: 0.02, delta: 0.01, b: 5.0, e_r: 1.0 };
        prop_assert_eq!(s.len(), 1);
        prop_assert_eq!(s[0].bound, problem.bound_at(eps, q_inverse(0.01).unwrap()).unwrap());
    }
}

#[test]
fn aggregate_noise_variance() {
    let g = WeightedGraph::standard(dpfc::Topology::Star, 5, 1.0).unwrap();
    let g = WeightedGraph::new(
        5,
        g.edges().iter().map(|e| (e.a, e.b, 0.5 + 0.1 * e.b as f64)),
    )
    .unwrap();
    let p = PerronMatrix::new(&g, 0.3).unwrap();
    let sigmas = [1.0, 2.0, 0.5, 1.5, 3.0];
    let mech: Vec<GaussianMechanism> = sigmas.iter().map(|&s| GaussianMechanism::new(s).unwrap()).collect();
    let want = noise_variances(&p, &sigmas).unwrap();
    let mut rng = stream_rng(11, 0);
    let steps = 100_000;
    let mut sum = [0.0; 5];
    let mut sum_sq = [0.0; 5];
    for _ in 0..steps {
        let v: Vec<f64> = mech.iter().map(|m| m.draw(&mut rng)).collect();
        for (i, z) in network_noise(&p, &v).into_iter().enumerate() {
            sum[i] += z;
            sum_sq[i] += z * z;
        }
    }
    for i in 0..5 {
        let mean = sum[i] / steps as f64;
        let var = sum_sq[i] / steps as f64 - mean * mean;
        assert!((var / want[i] - 1.0).abs() < 0.02, "agent {i}: {var} vs {}", want[i]);
    }
}

#[test]
fn noise_sample_moments() {
    let sigma = 2.5;
    let draws = sample_noise(sigma, 1_000_000, 99).unwrap();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // 5 standard errors.
    assert!(mean.abs() < 5.0 * sigma / n.sqrt(), "mean {mean}");
    assert!((var / (sigma * sigma) - 1.0).abs() < 5.0 * (2.0 / n).sqrt(), "var {var}");
}

#[test]
fn surface_is_monotone_on_default_grid() {
    let eps = linspace(0.1, 1.0, 50);
    let l2s = linspace(1.0, 50.0, 50);
    let s = bound_surface(&eps, &l2s, 50, 0.01, 5.0, 0.02).unwrap();
    for (i, row) in s.chunks(50).enumerate() {
        assert!(row.windows(2).all(|w| w[1].bound < w[0].bound), "row {i}");
        if i > 0 {
            let prev = &s[(i - 1) * 50..i * 50];
            assert!(prev.iter().zip(row).all(|(a, b)| b.bound < a.bound));
        }
    }
}
