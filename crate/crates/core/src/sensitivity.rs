//! How strongly the shared-parameter error bound reacts to ε versus λ2.
//!
//! With `λ = K_δ + sqrt(K_δ² + 2ε)` the bound reads
//! `B = γ λ² b² (N−1)² / (4 ε² N λ2 (2 − γλ2))`, and
//!
//! ```text
//! ∂B/∂ε  = C · (2λ / (ε² sqrt(K_δ² + 2ε)) − 2λ² / ε³)
//! ∂B/∂λ2 = C · λ²/ε² · (γ / (2 − γλ2) − 1/λ2)
//! C      = γ (N−1)² b² / (4 N λ2 (2 − γλ2))
//! ```
//!
//! "More sensitive to λ2" means `∂B/∂λ2 < ∂B/∂ε` (both are negative for
//! `λ2 < 1/γ`). The closed-form crossover cutoffs and the equivalent
//! quadratic criterion are reported next to the direct comparison; they are
//! not assumed to agree.

use std::fmt;

use crate::bounds::bound_for_sigma;
use crate::error::{Error, Result};
use crate::privacy::{kappa_from_k, q_inverse};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityPoint {
    pub epsilon: f64,
    pub k_delta: f64,
    pub b: f64,
    pub gamma: f64,
    pub n: usize,
    pub lambda2: f64,
}

impl SensitivityPoint {
    pub fn new(epsilon: f64, delta: f64, b: f64, gamma: f64, n: usize, lambda2: f64) -> Result<Self> {
        Self::with_k_delta(epsilon, q_inverse(delta)?, b, gamma, n, lambda2)
    }

    pub fn with_k_delta(
        epsilon: f64,
        k_delta: f64,
        b: f64,
        gamma: f64,
        n: usize,
        lambda2: f64,
    ) -> Result<Self> {
        let point = Self {
            epsilon,
            k_delta,
            b,
            gamma,
            n,
            lambda2,
        };
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Domain {
                name: "epsilon",
                value: epsilon,
                expected: "(0, inf)",
            });
        }
        if !(k_delta.is_finite() && k_delta >= 0.0) {
            return Err(Error::Domain {
                name: "K_delta",
                value: k_delta,
                expected: "[0, inf)",
            });
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::Domain {
                name: "b",
                value: b,
                expected: "(0, inf)",
            });
        }
        if n < 2 {
            return Err(Error::Domain {
                name: "N",
                value: n as f64,
                expected: "[2, inf)",
            });
        }
        // Validates gamma and 0 < λ2 < 2/γ.
        bound_for_sigma(lambda2, n, gamma, 1.0)?;
        Ok(point)
    }

    /// `λ(δ, ε) = K_δ + sqrt(K_δ² + 2ε)`.
    pub fn aux(&self) -> f64 {
        self.k_delta + self.radicand().sqrt()
    }

    fn radicand(&self) -> f64 {
        self.k_delta * self.k_delta + 2.0 * self.epsilon
    }

    fn prefactor(&self) -> f64 {
        let nf = self.n as f64;
        self.gamma * (nf - 1.0).powi(2) * self.b * self.b
            / (4.0 * nf * self.lambda2 * (2.0 - self.gamma * self.lambda2))
    }

    pub fn bound(&self) -> f64 {
        let sigma = self.b * kappa_from_k(self.k_delta, self.epsilon);
        bound_for_sigma(self.lambda2, self.n, self.gamma, sigma * sigma)
            .expect("validated on construction")
    }

    pub fn d_epsilon(&self) -> f64 {
        let lam = self.aux();
        let eps = self.epsilon;
        self.prefactor()
            * (2.0 * lam / (eps * eps * self.radicand().sqrt()) - 2.0 * lam * lam / eps.powi(3))
    }

    /// `∂B/∂λ2`; the bracket `γ/(2−γλ2) − 1/λ2` is evaluated in the
    /// equivalent form `2(γλ2 − 1) / (λ2 (2 − γλ2))` so that it vanishes
    /// exactly when `γλ2 = 1`.
    pub fn d_lambda2(&self) -> f64 {
        let lam = self.aux();
        let gl = self.gamma * self.lambda2;
        let bracket = 2.0 * (gl - 1.0) / (self.lambda2 * (2.0 - gl));
        self.prefactor() * lam * lam / (self.epsilon * self.epsilon) * bracket
    }

    /// Both partials are negative only for `λ2 < 1/γ`.
    pub fn in_validity_region(&self) -> bool {
        self.gamma * self.lambda2 < 1.0
    }

    /// `(εγ/A − γ)λ2² + (2 + εγ − 2ε/A)λ2 − ε` with
    /// `A = (K_δ + sqrt(K_δ² + 2ε))·sqrt(K_δ² + 2ε)`; negative exactly when
    /// `∂B/∂λ2 < ∂B/∂ε` on `0 < λ2 < 2/γ`.
    pub fn quadratic(&self) -> f64 {
        let (eps, g, l2) = (self.epsilon, self.gamma, self.lambda2);
        let a = self.aux() * self.radicand().sqrt();
        (eps * g / a - g) * l2 * l2 + (2.0 + eps * g - 2.0 * eps / a) * l2 - eps
    }
}

/// Which parameter the error bound is more sensitive to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dominance {
    Topology,
    Epsilon,
}

impl fmt::Display for Dominance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dominance::Topology => "topology_dominant",
            Dominance::Epsilon => "epsilon_dominant",
        })
    }
}

/// A crossover value `η ± sqrt(radicand)`; absent when the radicand is negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    pub value: Option<f64>,
    pub radicand: f64,
}

/// Closed-form crossover cutoffs: topology dominates when
/// `λ2 > upper` or `λ2 < lower`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossoverCutoffs {
    pub alpha: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub upper: Cutoff,
    pub lower: Cutoff,
}

impl CrossoverCutoffs {
    pub fn verdict(&self, lambda2: f64) -> Dominance {
        let above = self.upper.value.is_some_and(|c| lambda2 > c);
        let below = self.lower.value.is_some_and(|c| lambda2 < c);
        if above || below {
            Dominance::Topology
        } else {
            Dominance::Epsilon
        }
    }
}

pub fn crossover_cutoffs(epsilon: f64, k_delta: f64, gamma: f64) -> Result<CrossoverCutoffs> {
    if !(epsilon > 0.0 && gamma > 0.0 && k_delta >= 0.0) {
        return Err(Error::Domain {
            name: "epsilon/gamma",
            value: epsilon.min(gamma),
            expected: "(0, inf)",
        });
    }
    let k2 = k_delta * k_delta;
    let k4 = k2 * k2;
    let alpha = epsilon * epsilon + 1.5 * epsilon * k2 + 1.0 / (gamma * gamma) + k4 / 2.0;
    let root = (2.0 * epsilon * k2 + k4).sqrt();
    let centre = (2.0 * epsilon * gamma + gamma * k2 + 2.0) / (2.0 * gamma);
    let eta1 = centre + root / 2.0;
    let eta2 = centre - root / 2.0;
    let spread = if root > 0.0 {
        k2 * (4.0 * epsilon * epsilon + 4.0 * epsilon * k2 + k4) / (2.0 * root)
    } else {
        0.0
    };
    let cut = |eta: f64, radicand: f64| Cutoff {
        value: (radicand >= 0.0).then(|| eta - radicand.sqrt()),
        radicand,
    };
    let upper = cut(eta1, spread + alpha);
    let lower = cut(eta2, alpha - spread);
    for (c, which) in [(&upper, "upper"), (&lower, "lower")] {
        if c.value.is_none() {
            log::warn!("{which} crossover cutoff has negative radicand {}", c.radicand);
        }
    }
    Ok(CrossoverCutoffs {
        alpha,
        eta1,
        eta2,
        upper,
        lower,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityReport {
    pub point: SensitivityPoint,
    pub d_epsilon: f64,
    pub d_lambda2: f64,
    /// Direct comparison of the two partials.
    pub verdict: Dominance,
    pub quadratic: f64,
    pub quadratic_verdict: Dominance,
    pub cutoffs: CrossoverCutoffs,
    pub cutoff_verdict: Dominance,
    pub in_validity_region: bool,
}

impl SensitivityReport {
    pub fn quadratic_agrees(&self) -> bool {
        self.quadratic_verdict == self.verdict
    }

    pub fn cutoffs_agree(&self) -> bool {
        self.cutoff_verdict == self.verdict
    }
}

pub fn compare(point: &SensitivityPoint) -> Result<SensitivityReport> {
    let d_epsilon = point.d_epsilon();
    let d_lambda2 = point.d_lambda2();
    let verdict = if d_lambda2 < d_epsilon {
        Dominance::Topology
    } else {
        Dominance::Epsilon
    };
    let quadratic = point.quadratic();
    let quadratic_verdict = if quadratic < 0.0 {
        Dominance::Topology
    } else {
        Dominance::Epsilon
    };
    let cutoffs = crossover_cutoffs(point.epsilon, point.k_delta, point.gamma)?;
    let report = SensitivityReport {
        point: *point,
        d_epsilon,
        d_lambda2,
        verdict,
        quadratic,
        quadratic_verdict,
        cutoff_verdict: cutoffs.verdict(point.lambda2),
        cutoffs,
        in_validity_region: point.in_validity_region(),
    };
    if !report.quadratic_agrees() {
        log::warn!(
            "quadratic criterion ({quadratic:e}) disagrees with direct partial comparison at lambda2 = {}",
            point.lambda2
        );
    }
    Ok(report)
}
