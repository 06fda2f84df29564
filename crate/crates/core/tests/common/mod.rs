//! Reference implementations used only as test oracles. Each one takes a
//! different numerical route from the library code it checks.
#![allow(dead_code)]

use dpfc::bounds::noise_variances;
use dpfc::{PerronMatrix, WeightedGraph};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `Q(y)` by composite Simpson quadrature of the normal density over
/// `[y, y + 40]` (the remaining mass is below 1e-300 for `y ≥ 0`).
pub fn q_quadrature(y: f64) -> f64 {
    assert!(y >= 0.0);
    let intervals = 200_000;
    let h = 40.0 / intervals as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = pdf(y) + pdf(y + 40.0);
    for k in 1..intervals {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * pdf(y + k as f64 * h);
    }
    acc * h / 3.0
}

/// `Q⁻¹(δ)` by plain bisection on the quadrature oracle.
pub fn q_inverse_bisection(delta: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 12.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q_quadrature(mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Central difference with one Richardson extrapolation step.
pub fn derivative(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-3 * x.abs().max(1e-3);
    let central = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let (d1, d2) = (central(h), central(h / 2.0));
    (4.0 * d2 - d1) / 3.0
}

/// Kemeny constant from the fundamental matrix: `trace((I − T + 𝟙πᵀ)⁻¹) − 1`
/// with `π` uniform (doubly stochastic `T`).
pub fn kemeny_fundamental(t: &DMatrix<f64>) -> f64 {
    let n = t.nrows();
    let pi = DMatrix::from_element(n, n, 1.0 / n as f64);
    let z = (DMatrix::identity(n, n) - t + pi)
        .try_inverse()
        .expect("fundamental matrix is invertible for an ergodic chain");
    z.trace() - 1.0
}

/// Stationary deviation covariance by solving the vectorised Lyapunov
/// equation `(I − A⊗A) vec Σ = vec(Q C Q)` directly.
pub fn lyapunov_direct(p: &PerronMatrix, cov: &DMatrix<f64>) -> f64 {
    let n = p.node_count();
    let q = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let a = &q * p.matrix() * &q;
    let forcing = &q * cov * &q;
    let kron = a.kronecker(&a);
    let system = DMatrix::identity(n * n, n * n) - kron;
    let rhs = nalgebra::DVector::from_column_slice(forcing.as_slice());
    let vec_sigma = system.lu().solve(&rhs).expect("A is a strict contraction on the deviation space");
    let sigma = DMatrix::from_column_slice(n, n, vec_sigma.as_slice());
    sigma.trace() / n as f64
}

/// Exact error for per-agent variances `s²` via the direct solve.
pub fn exact_diagonal(p: &PerronMatrix, sigmas: &[f64]) -> f64 {
    let s2 = noise_variances(p, sigmas).unwrap();
    lyapunov_direct(p, &DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s2)))
}

/// Exact error for the broadcast protocol, building `z = γ W v` from the
/// graph rather than the Perron matrix.
pub fn exact_broadcast(graph: &WeightedGraph, p: &PerronMatrix, sigmas: &[f64]) -> f64 {
    let g = graph.adjacency_matrix() * p.gamma();
    let var = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        sigmas.len(),
        sigmas.iter().map(|s| s * s),
    ));
    lyapunov_direct(p, &(&g * var * g.transpose()))
}

/// Euclidean norm by explicit summation in extended order (pairwise).
pub fn l2_norm_pairwise(v: &[f64]) -> f64 {
    fn sum_sq(v: &[f64]) -> f64 {
        if v.len() <= 8 {
            v.iter().map(|x| x * x).sum()
        } else {
            let (a, b) = v.split_at(v.len() / 2);
            sum_sq(a) + sum_sq(b)
        }
    }
    sum_sq(v).sqrt()
}

/// Graph with `N ∈ [3, 12]` for the randomized sandwich checks, indexed by `case`.
pub fn random_case(case: u64) -> (WeightedGraph, f64, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + case);
    let n = rng.random_range(3..=12);
    let extra = rng.random_range(0.0..0.5);
    let graph = WeightedGraph::random_connected(n, extra, &mut rng).unwrap();
    let gamma = 0.5 / graph.max_degree();
    let sigmas = (0..n).map(|_| 2.0 - 1.9 * rng.random::<f64>()).collect();
    (graph, gamma, sigmas)
}
