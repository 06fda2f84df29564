//! The Perron matrix `P = I - γL` of the consensus dynamics, viewed as the
//! transition matrix of a reversible Markov chain.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg;

const STOCHASTIC_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-12;
/// Non-leading eigenvalues at or above `1 - KEMENY_GAP_TOL` mean the chain is
/// numerically reducible.
const KEMENY_GAP_TOL: f64 = 1e-13;

/// `P = I - γL(G)` for a connected graph and an admissible step size.
#[derive(Debug, Clone)]
pub struct PerronMatrix {
    matrix: DMatrix<f64>,
    gamma: f64,
    lambda2: f64,
    /// Off-diagonal structure: `(j, w_ij)` per node.
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl PerronMatrix {
    /// Requires a connected graph and `γ·d_i < 1` at every node (equivalently
    /// `γ < 1/d_max`). The first offending node is the max-degree one.
    pub fn new(graph: &WeightedGraph, gamma: f64) -> Result<Self> {
        check_step_size(graph, gamma)?;
        if !graph.checked_connectivity() {
            return Err(Error::Disconnected);
        }
        let n = graph.node_count();
        let matrix = DMatrix::identity(n, n) - graph.laplacian() * gamma;
        let lambda2 = graph.algebraic_connectivity()?;
        let perron = Self {
            matrix,
            gamma,
            lambda2,
            neighbors: (0..n).map(|i| graph.neighbors(i).to_vec()).collect(),
        };
        perron.verify_doubly_stochastic()?;
        Ok(perron)
    }

    fn verify_doubly_stochastic(&self) -> Result<()> {
        let n = self.node_count();
        let asym = linalg::max_asymmetry(&self.matrix);
        if asym > STOCHASTIC_TOL {
            return Err(Error::NonSymmetric(asym));
        }
        for i in 0..n {
            let row = self.matrix.row(i).sum();
            let col = self.matrix.column(i).sum();
            if (row - 1.0).abs() > STOCHASTIC_TOL || (col - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotStationary((row - 1.0).abs().max((col - 1.0).abs())));
            }
        }
        if self.matrix.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidGraph("Perron matrix has a negative entry".into()));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn node_count(&self) -> usize {
        self.matrix.nrows()
    }

    /// Algebraic connectivity of the underlying graph.
    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn squared(&self) -> DMatrix<f64> {
        &self.matrix * &self.matrix
    }

    /// Eigenvalues of `P`, descending (the first is 1).
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut ev = linalg::symmetric_eigenvalues(&self.matrix)?;
        ev.reverse();
        Ok(ev)
    }

    /// Largest modulus among the non-unit eigenvalues of `P`; the contraction
    /// rate of deviations from consensus.
    pub fn mixing_rate(&self) -> Result<f64> {
        Ok(self.eigenvalues()?[1..]
            .iter()
            .fold(0.0_f64, |acc, &l| acc.max(l.abs())))
    }

    /// Stationary distribution of the chain. Symmetry forces the uniform
    /// distribution; the residual `πᵀP − πᵀ` is checked anyway.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>> {
        let n = self.node_count();
        let pi = vec![1.0 / n as f64; n];
        let residual = (0..n)
            .map(|j| {
                let s: f64 = (0..n).map(|i| pi[i] * self.matrix[(i, j)]).sum();
                (s - pi[j]).abs()
            })
            .fold(0.0, f64::max);
        if residual > STATIONARY_TOL {
            return Err(Error::NotStationary(residual));
        }
        Ok(pi)
    }

    pub fn kemeny(&self) -> Result<f64> {
        kemeny_constant(&self.matrix)
    }

    /// Kemeny constant of the two-step chain `P²`.
    pub fn kemeny_squared(&self) -> Result<f64> {
        kemeny_constant(&self.squared())
    }
}

fn check_step_size(graph: &WeightedGraph, gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Domain {
            name: "gamma",
            value: gamma,
            expected: "(0, 1/d_max)",
        });
    }
    let degrees = graph.degrees();
    let d_max = degrees.iter().copied().fold(0.0, f64::max);
    if let Some((node, &degree)) = degrees
        .iter()
        .enumerate()
        .filter(|(_, &d)| gamma * d >= 1.0)
        .max_by(|a, b| a.1.total_cmp(b.1))
    {
        return Err(Error::StepSizeTooLarge {
            node: node + 1,
            gamma,
            degree,
            product: gamma * degree,
            limit: 1.0 / d_max,
        });
    }
    Ok(())
}

/// `P = I − γL(G)` with the admissibility checks of [`PerronMatrix::new`].
pub fn build_perron(graph: &WeightedGraph, gamma: f64) -> Result<PerronMatrix> {
    PerronMatrix::new(graph, gamma)
}

/// Kemeny constant of a symmetric stochastic matrix, `Σ_{i≥2} 1/(1 − λ_i)`
/// over all eigenvalues except the leading unit one.
pub fn kemeny_constant(transition: &DMatrix<f64>) -> Result<f64> {
    let mut ev = linalg::symmetric_eigenvalues(transition)?;
    ev.reverse();
    if (ev[0] - 1.0).abs() > 1e-10 {
        return Err(Error::Eigen(format!(
            "leading eigenvalue {} is not 1; matrix is not stochastic",
            ev[0]
        )));
    }
    let mut total = 0.0;
    for (k, &lambda) in ev.iter().enumerate().skip(1) {
        if lambda >= 1.0 - KEMENY_GAP_TOL {
            return Err(Error::KemenyFailure {
                index: k + 1,
                value: lambda,
            });
        }
        total += 1.0 / (1.0 - lambda);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Topology;

    #[test]
    fn two_node_perron() {
        let g = WeightedGraph::new(2, [(0, 1, 1.0)]).unwrap();
        let p = build_perron(&g, 0.25).unwrap();
        assert_eq!(
            p.matrix(),
            &DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75])
        );
        assert_eq!(p.stationary_distribution().unwrap(), vec![0.5, 0.5]);
        assert!((p.kemeny().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn star_step_size_limits() {
        let g = WeightedGraph::standard(Topology::Star, 5, 1.0).unwrap();
        let p = build_perron(&g, 0.2).unwrap();
        for i in 0..5 {
            assert!((p.matrix().row(i).sum() - 1.0).abs() < 1e-12);
            assert!((p.matrix().column(i).sum() - 1.0).abs() < 1e-12);
        }
        match build_perron(&g, 0.3) {
            Err(Error::StepSizeTooLarge { node, degree, .. }) => {
                assert_eq!(node, 1);
                assert_eq!(degree, 4.0);
            }
            other => panic!("expected StepSizeTooLarge, got {other:?}"),
        }
        // exactly 1/d_max is excluded
        assert!(build_perron(&g, 0.25).is_err());
        assert!(build_perron(&g, 0.0).is_err());
        assert!(build_perron(&g, -0.1).is_err());
    }

    #[test]
    fn disconnected_rejected() {
        let g = WeightedGraph::new(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert_eq!(build_perron(&g, 0.1).unwrap_err(), Error::Disconnected);
    }

    #[test]
    fn uniform_stationary_distribution() {
        let g = WeightedGraph::standard(Topology::Line, 5, 1.0).unwrap();
        let p = build_perron(&g, 0.3).unwrap();
        assert_eq!(p.stationary_distribution().unwrap(), vec![0.2; 5]);
    }

    #[test]
    fn kemeny_rejects_reducible_chain() {
        let block = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.5, 0.5, 0.0, 0.0, //
                0.5, 0.5, 0.0, 0.0, //
                0.0, 0.0, 0.5, 0.5, //
                0.0, 0.0, 0.5, 0.5,
            ],
        );
        assert!(matches!(
            kemeny_constant(&block),
            Err(Error::KemenyFailure { index: 2, .. })
        ));
    }

    #[test]
    fn mixing_rate_of_star() {
        // L spectrum {0,1,1,1,5}; P spectrum {1,0.8,0.8,0.8,0}
        let g = WeightedGraph::standard(Topology::Star, 5, 1.0).unwrap();
        let p = build_perron(&g, 0.2).unwrap();
        assert!((p.mixing_rate().unwrap() - 0.8).abs() < 1e-12);
        assert!((p.lambda2() - 1.0).abs() < 1e-12);
    }
}
