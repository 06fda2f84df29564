//! Undirected weighted simple graphs and their Laplacian spectra.
//!
//! Nodes are 0-indexed internally. File formats and CLI output use 1-indexed
//! node labels; conversion happens at the boundary ([`WeightedGraph::from_one_indexed`]).

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Spectral connectivity tolerance: λ2 above this counts as connected.
pub const CONNECTIVITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Complete,
    Cycle,
    Line,
    Star,
}

impl Topology {
    pub const ALL: [Topology; 4] = [
        Topology::Complete,
        Topology::Cycle,
        Topology::Line,
        Topology::Star,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Topology::Complete => "complete",
            Topology::Cycle => "cycle",
            Topology::Line => "line",
            Topology::Star => "star",
        }
    }

    pub fn min_nodes(self) -> usize {
        match self {
            Topology::Cycle => 3,
            _ => 2,
        }
    }

    /// Closed-form algebraic connectivity of the uniform-weight topology.
    ///
    /// Used where N is too large to build a dense Laplacian.
    pub fn algebraic_connectivity(self, n: usize, w: f64) -> f64 {
        let nf = n as f64;
        match self {
            Topology::Complete => w * nf,
            Topology::Cycle => 2.0 * w * (1.0 - (2.0 * PI / nf).cos()),
            Topology::Line => 2.0 * w * (1.0 - (PI / nf).cos()),
            Topology::Star => w,
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "complete" => Ok(Topology::Complete),
            "cycle" | "ring" => Ok(Topology::Cycle),
            "line" | "path" => Ok(Topology::Line),
            "star" => Ok(Topology::Star),
            other => Err(Error::Config(format!("unknown topology `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Undirected simple graph with strictly positive edge weights.
///
/// Each unordered pair is stored once, so `w_ij = w_ji` holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl WeightedGraph {
    /// Builds a graph from 0-indexed `(i, j, w)` triples.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut seen = BTreeMap::new();
        for (i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) references a node outside 1..={n}",
                    i + 1,
                    j + 1
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {}", i + 1)));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has non-positive weight {w}",
                    i + 1,
                    j + 1
                )));
            }
            let key = (i.min(j), i.max(j));
            if seen.insert(key, w).is_some() {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    key.0 + 1,
                    key.1 + 1
                )));
            }
        }
        let edges: Vec<Edge> = seen
            .into_iter()
            .map(|((a, b), weight)| Edge { a, b, weight })
            .collect();
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            adjacency[e.a].push((e.b, e.weight));
            adjacency[e.b].push((e.a, e.weight));
        }
        for row in &mut adjacency {
            row.sort_by_key(|&(j, _)| j);
        }
        Ok(Self {
            n,
            edges,
            adjacency,
        })
    }

    /// Builds a graph from 1-indexed `[i, j, w]` triples as used in config files.
    pub fn from_one_indexed(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut converted = Vec::with_capacity(edges.len());
        for &(i, j, w) in edges {
            if i == 0 || j == 0 {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) uses node 0; node labels are 1-indexed"
                )));
            }
            converted.push((i - 1, j - 1, w));
        }
        Self::new(n, converted)
    }

    /// Uniform-weight named topology. For the star, node 0 (label 1) is the hub.
    pub fn standard(kind: Topology, n: usize, w: f64) -> Result<Self> {
        if n < kind.min_nodes() {
            return Err(Error::InvalidTopology {
                kind: kind.name(),
                n,
                min: kind.min_nodes(),
            });
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::Domain {
                name: "w",
                value: w,
                expected: "(0, inf)",
            });
        }
        let edges: Vec<(usize, usize, f64)> = match kind {
            Topology::Complete => (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j, w)))
                .collect(),
            Topology::Cycle => (0..n).map(|i| (i, (i + 1) % n, w)).collect(),
            Topology::Line => (0..n - 1).map(|i| (i, i + 1, w)).collect(),
            Topology::Star => (1..n).map(|j| (0, j, w)).collect(),
        };
        Self::new(n, edges)
    }

    /// Random connected graph: a uniform random spanning tree (via a random
    /// Prüfer sequence) plus each remaining pair independently with
    /// probability `extra_edge_prob`. Weights are uniform on (0.1, 1.0].
    pub fn random_connected<R: Rng + ?Sized>(
        n: usize,
        extra_edge_prob: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidTopology {
                kind: "random",
                n,
                min: 2,
            });
        }
        let weight = |rng: &mut R| 1.0 - 0.9 * rng.random::<f64>();
        let mut pairs = BTreeMap::new();
        for (a, b) in random_tree(n, rng) {
            let w = weight(rng);
            pairs.insert((a.min(b), a.max(b)), w);
        }
        for i in 0..n {
            for j in i + 1..n {
                if !pairs.contains_key(&(i, j)) && rng.random::<f64>() < extra_edge_prob {
                    let w = weight(rng);
                    pairs.insert((i, j), w);
                }
            }
        }
        Self::new(n, pairs.into_iter().map(|((i, j), w)| (i, j, w)))
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `i` with their edge weights, sorted by node index.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.adjacency[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map(|&(_, w)| w)
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.adjacency[i].iter().map(|&(_, w)| w).sum()
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    pub fn max_degree(&self) -> f64 {
        self.degrees().into_iter().fold(0.0, f64::max)
    }

    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            a[(e.a, e.b)] = e.weight;
            a[(e.b, e.a)] = e.weight;
        }
        a
    }

    /// Weighted Laplacian `L = D - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = -self.adjacency_matrix();
        for i in 0..self.n {
            l[(i, i)] = self.degree(i);
        }
        l
    }

    /// Laplacian eigenvalues in ascending order.
    pub fn laplacian_spectrum(&self) -> Result<Vec<f64>> {
        linalg::symmetric_eigenvalues(&self.laplacian())
    }

    /// Second-smallest Laplacian eigenvalue, clamped at zero. Zero for a
    /// single node.
    pub fn algebraic_connectivity(&self) -> Result<f64> {
        if self.n < 2 {
            return Ok(0.0);
        }
        let spectrum = self.laplacian_spectrum()?;
        Ok(spectrum[1].max(0.0))
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let mut visited = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &(j, _) in &self.adjacency[i] {
                if !visited[j] {
                    visited[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }

    /// Graph-search connectivity, cross-checked against `λ2 > CONNECTIVITY_TOL`.
    /// The search result wins on disagreement; the conflict is logged.
    pub fn checked_connectivity(&self) -> bool {
        let searched = self.is_connected();
        if let Ok(l2) = self.algebraic_connectivity() {
            let spectral = l2 > CONNECTIVITY_TOL;
            if spectral != searched {
                log::warn!(
                    "connectivity conflict: graph search says {searched}, lambda2 = {l2:e}; using graph search"
                );
            }
        }
        searched
    }
}

/// Decodes a uniformly random Prüfer sequence into a labelled tree.
fn random_tree<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    if n == 2 {
        return vec![(0, 1)];
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &s in &seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &s in &seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).expect("a leaf always exists");
        edges.push((leaf, s));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}
