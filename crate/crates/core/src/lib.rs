//! Differentially private formation control.
//!
//! Agents run a consensus-based formation protocol while sharing only
//! Gaussian-privatized states. The crate provides the protocol itself, the
//! privacy calibration, exact and bounded steady-state error analysis, the
//! inverse design problem (how much privacy a topology can afford) and the
//! sensitivity of the error bound to privacy versus connectivity.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`graph`] | weighted graphs, Laplacian, λ2, named topologies |
//! | [`markov`] | Perron matrix, stationary distribution, Kemeny constant |
//! | [`privacy`] | Q-function, κ(δ, ε), Gaussian mechanism, adjacency |
//! | [`dynamics`] | private protocol, error metrics, Monte Carlo estimation |
//! | [`bounds`] | exact steady-state error, bounds, ε thresholds |
//! | [`sensitivity`] | partial derivatives and crossover analysis |
//! | [`config`] | YAML run configuration |

pub mod bounds;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod graph;
mod linalg;
pub mod markov;
pub mod privacy;
pub mod sensitivity;

pub use error::{Error, Result};
pub use graph::{Topology, WeightedGraph};
pub use markov::PerronMatrix;
pub use privacy::PrivacyParams;
