use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{kind} topology needs at least {min} nodes, got {n}")]
    InvalidTopology {
        kind: &'static str,
        n: usize,
        min: usize,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is disconnected")]
    Disconnected,

    #[error(
        "step size too large at node {node}: gamma * weighted degree = {gamma} * {degree} = {product} (needs < 1, i.e. gamma < 1/d_max = {limit})"
    )]
    StepSizeTooLarge {
        node: usize,
        gamma: f64,
        degree: f64,
        product: f64,
        limit: f64,
    },

    #[error("{name} = {value} is outside its domain {expected}")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NonSymmetric(f64),

    #[error("Kemeny constant undefined: eigenvalue {index} = {value} is numerically 1 (chain not irreducible)")]
    KemenyFailure { index: usize, value: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("stationary residual {0:e} exceeds tolerance")]
    NotStationary(f64),

    #[error("iteration diverged or did not converge after {iterations} iterations")]
    Divergence { iterations: usize },

    #[error("no threshold in [{lo:e}, {hi:e}]: bound at the bracket ends is {at_lo:e} .. {at_hi:e}, target {target:e}")]
    NoThreshold {
        lo: f64,
        hi: f64,
        at_lo: f64,
        at_hi: f64,
        target: f64,
    },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// True for errors caused by invalid inputs as opposed to numerical breakdown.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NonSymmetric(_)
                | Error::KemenyFailure { .. }
                | Error::Eigen(_)
                | Error::NotStationary(_)
                | Error::Divergence { .. }
                | Error::NoThreshold { .. }
        )
    }
}
