//! Steady-state error: exact value, Kemeny-constant bounds, the closed-form
//! privacy/topology bound and the ε thresholds it implies.
//!
//! For the private dynamics `x̄(k+1) = P x̄(k) + z(k)` with
//! `z ~ N(0, diag(s_1², …, s_N²))` the steady-state error satisfies
//!
//! ```text
//! min_i(s_i²/N)·K(P²)  ≤  e_ss  ≤  max_i(s_i²/N)·K(P²)
//! (N−1)/2  <  K(P²)  ≤  (N−1) / (1 − (1 − γλ2)²)
//! e_ss  ≤  γ(N−1)² max_i κ_i² b_i² / (N λ2 (2 − γλ2))
//! ```
//!
//! The diagonal covariance is exact for per-link noise. With one broadcast
//! per agent the noise is correlated (see [`noise_covariance`]) and
//! [`exact_error_for_covariance`] gives the protocol's true value.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::NoiseModel;
use crate::error::{Error, Result};
use crate::linalg::max_asymmetry;
use crate::graph::{Topology, WeightedGraph};
use crate::markov::PerronMatrix;
use crate::privacy::{kappa_from_k, q_inverse, PrivacyParams};

const LYAPUNOV_REL_TOL: f64 = 1e-13;
const LYAPUNOV_MAX_ITER: usize = 1_000_000;
const THRESHOLD_BRACKET: (f64, f64) = (1e-8, 1e8);
const THRESHOLD_REL_TOL: f64 = 1e-12;
/// Closed-form thresholds further than this from the numeric one are
/// reported as discrepancies.
pub const DISCREPANCY_TOL: f64 = 0.02;
pub const TABLE_SIZES: [usize; 4] = [10, 100, 1000, 10_000];

/// Per-agent variance of the aggregate noise, `s_i² = γ² Σ_{j∈N(i)} w_ij² σ_j²`.
pub fn noise_variances(perron: &PerronMatrix, sigmas: &[f64]) -> Result<Vec<f64>> {
    let n = perron.node_count();
    if sigmas.len() != n {
        return Err(Error::LengthMismatch {
            left: sigmas.len(),
            right: n,
        });
    }
    let g2 = perron.gamma() * perron.gamma();
    Ok((0..n)
        .map(|i| {
            g2 * perron
                .neighbors(i)
                .iter()
                .map(|&(j, w)| w * w * sigmas[j] * sigmas[j])
                .sum::<f64>()
        })
        .collect())
}

/// Covariance of the aggregate noise `z` actually produced by the protocol.
///
/// Under [`NoiseModel::Broadcast`] this is `G diag(σ²) Gᵀ` with
/// `G_ij = γ w_ij`, which has nonzero off-diagonal entries for agents with a
/// common neighbour. Under [`NoiseModel::PerLink`] it is `diag(s²)`.
pub fn noise_covariance(perron: &PerronMatrix, sigmas: &[f64], model: NoiseModel) -> Result<DMatrix<f64>> {
    let s2 = noise_variances(perron, sigmas)?;
    let n = perron.node_count();
    Ok(match model {
        NoiseModel::PerLink => DMatrix::from_diagonal(&DVector::from_column_slice(&s2)),
        NoiseModel::Broadcast => {
            let gamma = perron.gamma();
            let mut g = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                for &(j, w) in perron.neighbors(i) {
                    g[(i, j)] = gamma * w;
                }
            }
            let var = DMatrix::from_diagonal(&DVector::from_iterator(n, sigmas.iter().map(|s| s * s)));
            &g * var * g.transpose()
        }
    })
}

/// Exact steady-state error for diagonal noise covariance `Z = diag(z)`.
///
/// Iterates the deviation covariance `Σ ← A Σ Aᵀ + QZQᵀ` with
/// `Q = I − 𝟙𝟙ᵀ/N` and `A = QPQ` until the trace settles, then returns
/// `trace(Σ)/N`.
pub fn exact_steady_state_error(perron: &PerronMatrix, z: &[f64]) -> Result<f64> {
    let n = perron.node_count();
    if z.len() != n {
        return Err(Error::LengthMismatch {
            left: z.len(),
            right: n,
        });
    }
    if let Some(&bad) = z.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Domain {
            name: "noise variance",
            value: bad,
            expected: "[0, inf)",
        });
    }
    exact_error_for_covariance(perron, &DMatrix::from_diagonal(&DVector::from_column_slice(z)))
}

/// Exact steady-state error for an arbitrary symmetric noise covariance.
pub fn exact_error_for_covariance(perron: &PerronMatrix, cov: &DMatrix<f64>) -> Result<f64> {
    let n = perron.node_count();
    if cov.shape() != (n, n) {
        return Err(Error::LengthMismatch {
            left: cov.nrows(),
            right: n,
        });
    }
    let asym = max_asymmetry(cov);
    if asym > 1e-12 * cov.amax().max(1.0) {
        return Err(Error::NonSymmetric(asym));
    }
    if let Some(&bad) = cov.diagonal().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Domain {
            name: "noise variance",
            value: bad,
            expected: "[0, inf)",
        });
    }
    if cov.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let centering = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let a = &centering * perron.matrix() * &centering;
    let a_t = a.transpose();
    let forcing = &centering * cov * &centering;
    let mut sigma = DMatrix::<f64>::zeros(n, n);
    let mut prev_trace = 0.0;
    for _ in 0..LYAPUNOV_MAX_ITER {
        sigma = &a * &sigma * &a_t + &forcing;
        let trace = sigma.trace();
        if !trace.is_finite() {
            break;
        }
        if (trace - prev_trace).abs() <= LYAPUNOV_REL_TOL * trace.abs() {
            return Ok(trace / n as f64);
        }
        prev_trace = trace;
    }
    Err(Error::Divergence {
        iterations: LYAPUNOV_MAX_ITER,
    })
}

/// Bounds on `e_ss` through the Kemeny constant of `P²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KemenySandwich {
    pub lower: f64,
    pub upper: f64,
    pub kemeny_squared: f64,
}

pub fn kemeny_sandwich(perron: &PerronMatrix, z: &[f64]) -> Result<KemenySandwich> {
    let pi = perron.stationary_distribution()?;
    if z.len() != pi.len() {
        return Err(Error::LengthMismatch {
            left: z.len(),
            right: pi.len(),
        });
    }
    let kemeny = perron.kemeny_squared()?;
    let weighted: Vec<f64> = z.iter().zip(&pi).map(|(s, p)| s * p).collect();
    let lo = weighted.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = weighted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(KemenySandwich {
        lower: lo * kemeny,
        upper: hi * kemeny,
        kemeny_squared: kemeny,
    })
}

/// Closed-form bounds on `K(P²)`: `((N−1)/2, (N−1)/(1 − (1 − γλ2)²)]`.
pub fn kemeny_squared_bounds(n: usize, gamma: f64, lambda2: f64) -> (f64, f64) {
    let nm1 = n as f64 - 1.0;
    let second = 1.0 - gamma * lambda2;
    (nm1 / 2.0, nm1 / (1.0 - second * second))
}

/// `γ(N−1)² σ² / (N λ2 (2 − γλ2))`, the error bound for worst-case noise
/// scale `σ`. Requires `0 < λ2 < 2/γ`.
pub fn bound_for_sigma(lambda2: f64, n: usize, gamma: f64, sigma_sq: f64) -> Result<f64> {
    check_lambda2(lambda2, gamma)?;
    let nf = n as f64;
    Ok(gamma * (nf - 1.0).powi(2) * sigma_sq / (nf * lambda2 * (2.0 - gamma * lambda2)))
}

fn check_lambda2(lambda2: f64, gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Domain {
            name: "gamma",
            value: gamma,
            expected: "(0, inf)",
        });
    }
    if !(lambda2 > 0.0 && gamma * lambda2 < 2.0) {
        return Err(Error::Domain {
            name: "lambda2",
            value: lambda2,
            expected: "(0, 2/gamma)",
        });
    }
    Ok(())
}

/// Error bound for agents sharing privacy parameters, with `σ = b·κ(δ, ε)`.
pub fn homogeneous_bound(lambda2: f64, n: usize, gamma: f64, params: &PrivacyParams) -> Result<f64> {
    let sigma = params.noise_scale()?;
    bound_for_sigma(lambda2, n, gamma, sigma * sigma)
}

/// Error bound for per-agent privacy parameters on a concrete graph. The
/// step size must satisfy `γ·d_i < 1` at every node and the graph must be
/// connected.
pub fn steady_state_bound(graph: &WeightedGraph, gamma: f64, params: &[PrivacyParams]) -> Result<f64> {
    if params.len() != graph.node_count() {
        return Err(Error::LengthMismatch {
            left: params.len(),
            right: graph.node_count(),
        });
    }
    let perron = PerronMatrix::new(graph, gamma)?;
    let mut worst = 0.0_f64;
    for p in params {
        let s = p.noise_scale()?;
        worst = worst.max(s * s);
    }
    bound_for_sigma(perron.lambda2(), graph.node_count(), gamma, worst)
}

/// Every bound for one configuration, side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub node_count: usize,
    pub gamma: f64,
    pub lambda2: f64,
    pub max_degree: f64,
    /// `γ·d_i < 1` for every node.
    pub degree_condition: bool,
    /// `γ ∈ (0, 1/d_max)`.
    pub step_condition: bool,
    /// Noise scales used by the dynamics (may exceed the minimal `b·κ`).
    pub sigmas: Vec<f64>,
    pub noise_variances: Vec<f64>,
    pub kemeny_squared: f64,
    pub kemeny_lower: f64,
    pub kemeny_upper: f64,
    pub sandwich_lower: f64,
    pub sandwich_upper: f64,
    /// General bound from the per-agent privacy parameters.
    pub general_bound: f64,
    /// Shared-parameter bound, when all agents use the same parameters.
    pub homogeneous_bound: Option<f64>,
    /// Exact error with the diagonal covariance `diag(s²)`.
    pub exact: f64,
    /// Exact error with the broadcast protocol's full noise covariance.
    pub exact_broadcast: f64,
}

impl BoundReport {
    /// `sigmas` overrides the noise scales used for the exact value and the
    /// Kemeny bounds; by default each agent uses its minimal `b·κ`.
    pub fn compute(
        graph: &WeightedGraph,
        gamma: f64,
        params: &[PrivacyParams],
        sigmas: Option<&[f64]>,
    ) -> Result<Self> {
        let degrees = graph.degrees();
        let max_degree = degrees.iter().copied().fold(0.0, f64::max);
        let degree_condition = degrees.iter().all(|d| gamma * d < 1.0);
        let step_condition = gamma > 0.0 && gamma < 1.0 / max_degree;
        let perron = PerronMatrix::new(graph, gamma)?;
        let minimal: Vec<f64> = params
            .iter()
            .map(PrivacyParams::noise_scale)
            .collect::<Result<_>>()?;
        let sigmas = match sigmas {
            Some(s) => {
                for (i, (&given, &min)) in s.iter().zip(&minimal).enumerate() {
                    if given < min * (1.0 - 1e-12) {
                        return Err(Error::Config(format!(
                            "agent {} noise scale {given} is below the private minimum {min}",
                            i + 1
                        )));
                    }
                }
                s.to_vec()
            }
            None => minimal,
        };
        let z = noise_variances(&perron, &sigmas)?;
        let sandwich = kemeny_sandwich(&perron, &z)?;
        let n = graph.node_count();
        let (kemeny_lower, kemeny_upper) = kemeny_squared_bounds(n, gamma, perron.lambda2());
        let general_bound = steady_state_bound(graph, gamma, params)?;
        let homogeneous_bound = match params.split_first() {
            Some((first, rest)) if rest.iter().all(|p| p == first) => {
                Some(homogeneous_bound(perron.lambda2(), n, gamma, first)?)
            }
            _ => None,
        };
        let exact = exact_steady_state_error(&perron, &z)?;
        let exact_broadcast =
            exact_error_for_covariance(&perron, &noise_covariance(&perron, &sigmas, NoiseModel::Broadcast)?)?;
        Ok(Self {
            node_count: n,
            gamma,
            lambda2: perron.lambda2(),
            max_degree,
            degree_condition,
            step_condition,
            sigmas,
            noise_variances: z,
            kemeny_squared: sandwich.kemeny_squared,
            kemeny_lower,
            kemeny_upper,
            sandwich_lower: sandwich.lower,
            sandwich_upper: sandwich.upper,
            general_bound,
            homogeneous_bound,
            exact,
            exact_broadcast,
        })
    }
}

/// Inputs to the ε-threshold problem for a shared-parameter network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdProblem {
    pub lambda2: f64,
    pub n: usize,
    pub gamma: f64,
    pub delta: f64,
    pub b: f64,
    /// Required steady-state error level.
    pub e_r: f64,
}

impl ThresholdProblem {
    pub fn bound_at(&self, epsilon: f64, k_delta: f64) -> Result<f64> {
        let sigma = self.b * kappa_from_k(k_delta, epsilon);
        bound_for_sigma(self.lambda2, self.n, self.gamma, sigma * sigma)
    }
}

/// Smallest ε whose error bound meets `e_r`: the unique root of
/// `bound(ε) = e_r`, found by bisection on `log ε`. The bracket starts at
/// `[1e-8, 1e8]` and widens by factors of 1e8 when the root lies outside.
/// Any `ε ≥` the result certifies `e_ss ≤ e_r`; `e_r = ∞` gives 0.
pub fn epsilon_threshold(problem: &ThresholdProblem) -> Result<f64> {
    if !(problem.e_r > 0.0) {
        return Err(Error::Domain {
            name: "e_R",
            value: problem.e_r,
            expected: "(0, inf]",
        });
    }
    if !(problem.b.is_finite() && problem.b > 0.0) {
        return Err(Error::Domain {
            name: "b",
            value: problem.b,
            expected: "(0, inf)",
        });
    }
    check_lambda2(problem.lambda2, problem.gamma)?;
    let k = q_inverse(problem.delta)?;
    if problem.e_r == f64::INFINITY {
        return Ok(0.0);
    }
    let excess = |eps: f64| -> Result<f64> { Ok(problem.bound_at(eps, k)? - problem.e_r) };
    let (mut lo, mut hi) = THRESHOLD_BRACKET;
    let (mut f_lo, mut f_hi) = (excess(lo)?, excess(hi)?);
    while f_lo <= 0.0 && lo > 1e-280 {
        lo *= 1e-8;
        f_lo = excess(lo)?;
    }
    while f_hi > 0.0 && hi < 1e280 {
        hi *= 1e8;
        f_hi = excess(hi)?;
    }
    if !(f_lo > 0.0 && f_hi <= 0.0) {
        return Err(Error::NoThreshold {
            lo,
            hi,
            at_lo: f_lo + problem.e_r,
            at_hi: f_hi + problem.e_r,
            target: problem.e_r,
        });
    }
    while hi - lo > THRESHOLD_REL_TOL * lo {
        let mid = (lo * hi).sqrt();
        if excess(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Literal closed-form threshold expressions, evaluated exactly as stated
/// for each topology (including their `z` helper terms). These are kept
/// for comparison; [`epsilon_threshold`] is authoritative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedForm {
    /// General "cannot be assured below" expression for a given λ2.
    Impossibility { lambda2: f64 },
    Topology(Topology),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignParams {
    pub delta: f64,
    pub b: f64,
    pub w: f64,
    pub gamma: f64,
    pub e_r: f64,
}

impl Default for DesignParams {
    /// `δ = 0.01, b = 5, w = 1, γ = 1e-4, e_R = 100`.
    fn default() -> Self {
        Self {
            delta: 0.01,
            b: 5.0,
            w: 1.0,
            gamma: 1e-4,
            e_r: 100.0,
        }
    }
}

pub fn closed_form_threshold(form: ClosedForm, n: usize, params: &DesignParams) -> Result<f64> {
    let DesignParams {
        delta,
        b,
        w,
        gamma,
        e_r,
    } = *params;
    let k = q_inverse(delta)?;
    let nf = n as f64;
    let nm1 = nf - 1.0;
    let value = match form {
        ClosedForm::Impossibility { lambda2 } => {
            let z1 = gamma * nm1 * nm1 / (2.0 - gamma * lambda2);
            2.0 * b * z1 / (nf * e_r * lambda2)
                * (b + e_r * k * lambda2 * nf / (e_r * z1 * lambda2 * nf).sqrt())
        }
        ClosedForm::Topology(Topology::Complete) => {
            let gap = 2.0 - gamma * w * nf;
            2.0 * b * gamma * nm1 * nm1 / (nf * nf * e_r * w * gap)
                * (b + e_r * k * w * nf * gap.sqrt() / (nm1 * (e_r * gamma * w).sqrt()))
        }
        ClosedForm::Topology(Topology::Star) => {
            let gap = 2.0 - gamma * w;
            2.0 * b * gamma * nm1 * nm1 / (nf * e_r * w * gap)
                * (b + e_r * k * w * nf * gap.sqrt() / (nm1 * (e_r * gamma * w * nf).sqrt()))
        }
        ClosedForm::Topology(kind @ (Topology::Cycle | Topology::Line)) => {
            let angle = if kind == Topology::Cycle {
                2.0 * std::f64::consts::PI / nf
            } else {
                std::f64::consts::PI / nf
            };
            let a = 1.0 - angle.cos();
            let z = nm1 * nm1 * gamma / (1.0 - gamma * w * a);
            b * z / (nf * e_r * 2.0 * w * a) + k / (z * e_r * w * a * nf).sqrt()
        }
    };
    Ok(value)
}

/// Numeric threshold with the closed-form value alongside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdCell {
    pub topology: Topology,
    pub n: usize,
    pub lambda2: f64,
    pub numeric: f64,
    pub closed_form: f64,
    /// `|closed_form − numeric| / numeric`.
    pub deviation: f64,
}

impl ThresholdCell {
    pub fn is_discrepant(&self) -> bool {
        !(self.deviation <= DISCREPANCY_TOL)
    }
}

/// Threshold for a uniform-weight named topology, using its closed-form λ2.
pub fn design_threshold(topology: Topology, n: usize, params: &DesignParams) -> Result<ThresholdCell> {
    if n < topology.min_nodes() {
        return Err(Error::InvalidTopology {
            kind: topology.name(),
            n,
            min: topology.min_nodes(),
        });
    }
    let lambda2 = topology.algebraic_connectivity(n, params.w);
    let numeric = epsilon_threshold(&ThresholdProblem {
        lambda2,
        n,
        gamma: params.gamma,
        delta: params.delta,
        b: params.b,
        e_r: params.e_r,
    })?;
    let closed_form = closed_form_threshold(ClosedForm::Topology(topology), n, params)?;
    Ok(ThresholdCell {
        topology,
        n,
        lambda2,
        numeric,
        closed_form,
        deviation: (closed_form - numeric).abs() / numeric,
    })
}

/// All four named topologies over `sizes`, topology-major.
pub fn threshold_table(params: &DesignParams, sizes: &[usize]) -> Result<Vec<ThresholdCell>> {
    Topology::ALL
        .iter()
        .flat_map(|&t| sizes.iter().map(move |&n| design_threshold(t, n, params)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub epsilon: f64,
    pub lambda2: f64,
    pub bound: f64,
}

/// Shared-parameter bound over an (ε, λ2) grid with λ2 as a free parameter.
/// Cells with λ2 outside `(0, 2/γ)` are skipped. Ordered ε-major.
pub fn bound_surface(
    epsilons: &[f64],
    lambda2s: &[f64],
    n: usize,
    delta: f64,
    b: f64,
    gamma: f64,
) -> Result<Vec<SurfacePoint>> {
    let k = q_inverse(delta)?;
    let valid: Vec<f64> = lambda2s
        .iter()
        .copied()
        .filter(|&l| l > 0.0 && gamma * l < 2.0)
        .collect();
    if valid.len() < lambda2s.len() {
        log::warn!(
            "skipped {} lambda2 values outside (0, 2/gamma)",
            lambda2s.len() - valid.len()
        );
    }
    let mut out = Vec::with_capacity(epsilons.len() * valid.len());
    for &epsilon in epsilons {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Domain {
                name: "epsilon",
                value: epsilon,
                expected: "(0, inf)",
            });
        }
        let sigma = b * kappa_from_k(k, epsilon);
        for &lambda2 in &valid {
            out.push(SurfacePoint {
                epsilon,
                lambda2,
                bound: bound_for_sigma(lambda2, n, gamma, sigma * sigma)?,
            });
        }
    }
    Ok(out)
}

/// `count` evenly spaced points from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}
