//! Gaussian mechanism for trajectory-valued (ε, δ)-differential privacy.
//!
//! An agent with adjacency radius `b` that adds i.i.d. `N(0, σ²)` noise to its
//! state at every step is (ε, δ)-private whenever `σ ≥ b·κ(δ, ε)`, where
//!
//! ```text
//! κ(δ, ε) = (K_δ + sqrt(K_δ² + 2ε)) / (2ε),   K_δ = Q⁻¹(δ)
//! ```
//!
//! and `Q` is the standard Gaussian upper-tail probability.

use std::f64::consts::SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `ln 3`, the upper end of the typical ε range.
pub const LN_3: f64 = 1.098_612_288_668_109_8;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const Q_INVERSE_BRACKET: (f64, f64) = (0.0, 40.0);

/// Gaussian upper-tail probability `Q(y) = P[Z > y]` for `Z ~ N(0, 1)`.
pub fn q_function(y: f64) -> f64 {
    if y == f64::INFINITY {
        return 0.0;
    }
    if y == f64::NEG_INFINITY {
        return 1.0;
    }
    0.5 * libm::erfc(y / SQRT_2)
}

fn normal_pdf(y: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * y * y).exp()
}

/// `K_δ = Q⁻¹(δ)` for `δ ∈ (0, 1/2)`, by safeguarded Newton iteration on
/// `ln Q(x) = ln δ` within the bracket `[0, 40]`.
pub fn q_inverse(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::Domain {
            name: "delta",
            value: delta,
            expected: "(0, 1/2)",
        });
    }
    let target = delta.ln();
    let (mut lo, mut hi) = Q_INVERSE_BRACKET;
    let mut x = 1.0;
    for _ in 0..400 {
        let q = q_function(x);
        let f = q.ln() - target;
        if f == 0.0 {
            return Ok(x);
        }
        // ln Q is decreasing: f > 0 means the root lies to the right.
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = normal_pdf(x) / q;
        let newton = x + f / slope;
        let next = if slope.is_finite() && slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - x).abs();
        x = next;
        if step <= 4.0 * f64::EPSILON * x.max(1.0) || hi - lo <= 4.0 * f64::EPSILON * x.max(1.0)
        {
            return Ok(x);
        }
    }
    Ok(x)
}

/// `κ(δ, ε)` given `K_δ` directly.
pub fn kappa_from_k(k_delta: f64, epsilon: f64) -> f64 {
    (k_delta + (k_delta * k_delta + 2.0 * epsilon).sqrt()) / (2.0 * epsilon)
}

pub fn kappa(delta: f64, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    Ok(kappa_from_k(q_inverse(delta)?, epsilon))
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "epsilon",
            value: epsilon,
            expected: "(0, inf)",
        })
    }
}

/// Per-agent privacy parameters: leakage `epsilon`, failure probability
/// `delta` and adjacency radius `b` (state units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
    pub b: f64,
}

impl PrivacyParams {
    /// Validates ranges. Values outside the customary ε ∈ [0.1, ln 3],
    /// δ ≤ 0.01 are accepted with a logged warning.
    pub fn new(epsilon: f64, delta: f64, b: f64) -> Result<Self> {
        let params = Self { epsilon, delta, b };
        params.validate()?;
        if let Some(warning) = params.typical_range_warning() {
            log::warn!("{warning}");
        }
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::Domain {
                name: "delta",
                value: self.delta,
                expected: "(0, 1/2)",
            });
        }
        if !(self.b.is_finite() && self.b > 0.0) {
            return Err(Error::Domain {
                name: "b",
                value: self.b,
                expected: "(0, inf)",
            });
        }
        Ok(())
    }

    pub fn typical_range_warning(&self) -> Option<String> {
        let eps_ok = (0.1..=LN_3).contains(&self.epsilon);
        let delta_ok = self.delta <= 0.01;
        if eps_ok && delta_ok {
            None
        } else {
            Some(format!(
                "privacy parameters outside the usual range (epsilon in [0.1, ln 3], delta <= 0.01): epsilon = {}, delta = {}",
                self.epsilon, self.delta
            ))
        }
    }

    pub fn k_delta(&self) -> Result<f64> {
        q_inverse(self.delta)
    }

    pub fn kappa(&self) -> Result<f64> {
        kappa(self.delta, self.epsilon)
    }

    /// The minimal privacy-preserving noise scale `σ = b·κ(δ, ε)`.
    pub fn noise_scale(&self) -> Result<f64> {
        self.validate()?;
        Ok(self.b * self.kappa()?)
    }
}

pub fn noise_scale(params: &PrivacyParams) -> Result<f64> {
    params.noise_scale()
}

/// Generator for stream `stream` under `seed`. Distinct streams are
/// independent; the same `(seed, stream)` always yields the same sequence.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `steps` i.i.d. draws from `N(0, σ²)`, deterministic in `seed`.
pub fn sample_noise(sigma: f64, steps: usize, seed: u64) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Domain {
            name: "sigma",
            value: sigma,
            expected: "(0, inf)",
        });
    }
    let mut rng = stream_rng(seed, 0);
    Ok((0..steps)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Pointwise-in-time Gaussian noise with a fixed scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMechanism {
    sigma: f64,
}

impl GaussianMechanism {
    /// `sigma = 0` is allowed and yields the identity (no privacy).
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Domain {
                name: "sigma",
                value: sigma,
                expected: "[0, inf)",
            });
        }
        Ok(Self { sigma })
    }

    pub fn calibrated(params: &PrivacyParams) -> Result<Self> {
        Self::new(params.noise_scale()?)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// One noise draw. Always consumes exactly one normal variate so that
    /// streams stay aligned across agents, even when `sigma = 0`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.sigma * z
    }

    pub fn privatize<R: Rng + ?Sized>(&self, value: f64, rng: &mut R) -> f64 {
        value + self.draw(rng)
    }

    pub fn privatize_trajectory<R: Rng + ?Sized>(&self, trajectory: &[f64], rng: &mut R) -> Vec<f64> {
        trajectory.iter().map(|&y| self.privatize(y, rng)).collect()
    }
}

/// The value an agent broadcasts: its state privatized first, then shifted
/// by its formation anchor (`x̃_j − q_j`).
pub fn shared_value(state: f64, noise: f64, anchor: f64) -> f64 {
    (state + noise) - anchor
}

/// Adjacency under radius `b`: the ℓ2 distance between two equal-length
/// (truncated, flattened) trajectories is at most `b`.
pub fn is_adjacent(v: &[f64], w: &[f64], b: f64) -> Result<bool> {
    if v.len() != w.len() {
        return Err(Error::LengthMismatch {
            left: v.len(),
            right: w.len(),
        });
    }
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::Domain {
            name: "b",
            value: b,
            expected: "(0, inf)",
        });
    }
    let dist_sq: f64 = v.iter().zip(w).map(|(a, c)| (a - c) * (a - c)).sum();
    Ok(dist_sq.sqrt() <= b)
}
