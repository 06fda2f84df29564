//! Private formation control: noisy consensus on formation-shifted states.
//!
//! Each dimension of the formation runs an independent scalar protocol. In
//! shifted coordinates `x̄ = x − q` (with `q` the anchor column) agent `i`
//! updates
//!
//! ```text
//! x̄_i(k+1) = x̄_i(k) + γ Σ_{j∈N(i)} w_ij (x̃̄_j(k) − x̄_i(k)),   x̃̄_j = (x_j + v_j) − q_j
//! ```
//!
//! using its own exact state and its neighbours' privatized broadcasts. At
//! network level this is `x̄(k+1) = P x̄(k) + z(k)` with `z_i = γ Σ w_ij v_j`.
//!
//! Because one broadcast `v_j` reaches every neighbour of `j`, the entries of
//! `z` are correlated whenever two agents share a neighbour. The
//! [`NoiseModel::PerLink`] variant sends an independently privatized copy
//! over each link instead, which makes `z ~ N(0, diag(s²))` exactly.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::markov::PerronMatrix;
use crate::privacy::{shared_value, stream_rng, GaussianMechanism};

/// Number of mixing times covered by the default horizon.
pub const DEFAULT_HORIZON_MIXING_TIMES: f64 = 50.0;
pub const DEFAULT_TAIL_FRACTION: f64 = 0.25;
pub const DEFAULT_TRIALS: usize = 1000;
/// Trials are reduced in fixed-size chunks so results do not depend on the
/// worker count.
const TRIAL_CHUNK: usize = 32;
const MAX_DIMENSIONS: usize = 1 << 16;
const CI_Z: f64 = 1.96;

/// How privatized states reach neighbours.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// One noisy broadcast per agent and step, seen by all its neighbours.
    #[default]
    Broadcast,
    /// An independent noise draw for every (receiver, sender) link.
    PerLink,
}

/// Formation anchors `p`: one row per agent, one column per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationSpec {
    anchors: DMatrix<f64>,
}

impl FormationSpec {
    pub fn new(anchors: DMatrix<f64>) -> Result<Self> {
        if anchors.nrows() == 0 || anchors.ncols() == 0 {
            return Err(Error::Config("formation needs at least one agent and one dimension".into()));
        }
        if anchors.ncols() > MAX_DIMENSIONS {
            return Err(Error::Config(format!(
                "formation has {} dimensions; at most {MAX_DIMENSIONS} supported",
                anchors.ncols()
            )));
        }
        if anchors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("formation anchors must be finite".into()));
        }
        Ok(Self { anchors })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dims = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dims) {
            return Err(Error::Config(format!(
                "formation row {} has {} coordinates, expected {dims}",
                bad + 1,
                rows[bad].len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(rows.len(), dims, &flat))
    }

    /// All agents at the origin in `dims` dimensions (plain consensus).
    pub fn consensus(n: usize, dims: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(n, dims))
    }

    /// Planar five-agent formation: agent 1 at the origin, agents 2–5 on the
    /// corners of a 40×40 square around it.
    pub fn square_with_center() -> Self {
        Self::from_rows(&[
            vec![0.0, 0.0],
            vec![-20.0, 20.0],
            vec![20.0, 20.0],
            vec![20.0, -20.0],
            vec![-20.0, -20.0],
        ])
        .expect("static formation is valid")
    }

    /// Recovers anchors from desired relative offsets `Δ_ij = p_j − p_i` on
    /// the edges of a connected graph, placing node 0 at the origin.
    ///
    /// Offsets may be given for either orientation of an edge; both
    /// orientations given must satisfy `Δ_ij = −Δ_ji`, and offsets around
    /// every cycle must be consistent.
    pub fn from_offsets(
        graph: &WeightedGraph,
        dims: usize,
        offsets: &[(usize, usize, Vec<f64>)],
    ) -> Result<Self> {
        let n = graph.node_count();
        let mut table = std::collections::HashMap::new();
        for (i, j, delta) in offsets {
            if delta.len() != dims {
                return Err(Error::LengthMismatch {
                    left: delta.len(),
                    right: dims,
                });
            }
            if graph.weight(*i, *j).is_none() {
                return Err(Error::Config(format!(
                    "offset given for non-edge ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
            let flipped: Vec<f64> = delta.iter().map(|d| -d).collect();
            for (key, value) in [((*i, *j), delta.clone()), ((*j, *i), flipped)] {
                if let Some(existing) = table.insert(key, value.clone()) {
                    if !approx_eq_slice(&existing, &value, 1e-12) {
                        return Err(Error::Config(format!(
                            "offsets for ({}, {}) are not antisymmetric",
                            i + 1,
                            j + 1
                        )));
                    }
                }
            }
        }
        let mut anchors = DMatrix::<f64>::zeros(n, dims);
        let mut placed = vec![false; n];
        placed[0] = true;
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            for &(j, _) in graph.neighbors(i) {
                let delta = table.get(&(i, j)).ok_or_else(|| {
                    Error::Config(format!("missing offset for edge ({}, {})", i + 1, j + 1))
                })?;
                let candidate: Vec<f64> = (0..dims).map(|l| anchors[(i, l)] + delta[l]).collect();
                if placed[j] {
                    let current: Vec<f64> = anchors.row(j).iter().copied().collect();
                    if !approx_eq_slice(&current, &candidate, 1e-9) {
                        return Err(Error::Config(format!(
                            "offsets are inconsistent around a cycle through ({}, {})",
                            i + 1,
                            j + 1
                        )));
                    }
                } else {
                    for (l, v) in candidate.into_iter().enumerate() {
                        anchors[(j, l)] = v;
                    }
                    placed[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if placed.iter().any(|p| !p) {
            return Err(Error::Disconnected);
        }
        Self::new(anchors)
    }

    pub fn node_count(&self) -> usize {
        self.anchors.nrows()
    }

    pub fn dims(&self) -> usize {
        self.anchors.ncols()
    }

    pub fn anchors(&self) -> &DMatrix<f64> {
        &self.anchors
    }

    /// Anchor column `q` for dimension `dim`.
    pub fn column(&self, dim: usize) -> Vec<f64> {
        self.anchors.column(dim).iter().copied().collect()
    }

    /// `Δ_ij = p_j − p_i`.
    pub fn offset(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.dims())
            .map(|l| self.anchors[(j, l)] - self.anchors[(i, l)])
            .collect()
    }
}

fn approx_eq_slice(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0))
}

/// `x̄(k+1) = P x̄(k)`.
pub fn noiseless_step(xbar: &[f64], perron: &PerronMatrix) -> Vec<f64> {
    let p = perron.matrix();
    (0..xbar.len())
        .map(|i| (0..xbar.len()).map(|j| p[(i, j)] * xbar[j]).sum())
        .collect()
}

/// Node-level private update with explicit per-agent noise draws `v`: each
/// agent combines its own exact state with its neighbours' noisy states.
pub fn node_step(xbar: &[f64], perron: &PerronMatrix, noise: &[f64]) -> Vec<f64> {
    let gamma = perron.gamma();
    (0..xbar.len())
        .map(|i| {
            let pull: f64 = perron
                .neighbors(i)
                .iter()
                .map(|&(j, w)| w * (xbar[j] + noise[j] - xbar[i]))
                .sum();
            xbar[i] + gamma * pull
        })
        .collect()
}

/// Aggregate noise `z_i = γ Σ_{j∈N(i)} w_ij v_j` seen by each agent.
pub fn network_noise(perron: &PerronMatrix, noise: &[f64]) -> Vec<f64> {
    let gamma = perron.gamma();
    (0..noise.len())
        .map(|i| {
            gamma
                * perron
                    .neighbors(i)
                    .iter()
                    .map(|&(j, w)| w * noise[j])
                    .sum::<f64>()
        })
        .collect()
}

/// Network-level private update `x̄(k+1) = P x̄(k) + z(k)`.
pub fn network_step(xbar: &[f64], perron: &PerronMatrix, z: &[f64]) -> Vec<f64> {
    noiseless_step(xbar, perron)
        .into_iter()
        .zip(z)
        .map(|(a, b)| a + b)
        .collect()
}

/// One private step, drawing each agent's noise from its own mechanism.
pub fn private_step<R: Rng + ?Sized>(
    xbar: &[f64],
    perron: &PerronMatrix,
    mechanisms: &[GaussianMechanism],
    rng: &mut R,
) -> Vec<f64> {
    let noise: Vec<f64> = mechanisms.iter().map(|m| m.draw(rng)).collect();
    node_step(xbar, perron, &noise)
}

/// One private step with a fresh draw per link, receivers in order and each
/// receiver's neighbours in adjacency order.
pub fn per_link_step<R: Rng + ?Sized>(
    xbar: &[f64],
    perron: &PerronMatrix,
    mechanisms: &[GaussianMechanism],
    rng: &mut R,
) -> Vec<f64> {
    let gamma = perron.gamma();
    (0..xbar.len())
        .map(|i| {
            let pull: f64 = perron
                .neighbors(i)
                .iter()
                .map(|&(j, w)| w * (xbar[j] + mechanisms[j].draw(rng) - xbar[i]))
                .sum();
            xbar[i] + gamma * pull
        })
        .collect()
}

/// One private step of a scalar formation protocol in absolute coordinates:
/// agent `i` moves by `γ Σ w_ij ((x_j + v_j) − q_j − (x_i − q_i))`.
pub fn formation_step<R: Rng + ?Sized>(
    x: &[f64],
    q: &[f64],
    perron: &PerronMatrix,
    mechanisms: &[GaussianMechanism],
    model: NoiseModel,
    rng: &mut R,
) -> Vec<f64> {
    let n = x.len();
    let own: Vec<f64> = (0..n).map(|i| x[i] - q[i]).collect();
    let pulls: Vec<f64> = match model {
        NoiseModel::Broadcast => {
            let shared: Vec<f64> = (0..n)
                .map(|j| shared_value(x[j], mechanisms[j].draw(rng), q[j]))
                .collect();
            (0..n)
                .map(|i| {
                    perron
                        .neighbors(i)
                        .iter()
                        .map(|&(j, w)| w * (shared[j] - own[i]))
                        .sum()
                })
                .collect()
        }
        NoiseModel::PerLink => (0..n)
            .map(|i| {
                perron
                    .neighbors(i)
                    .iter()
                    .map(|&(j, w)| w * (shared_value(x[j], mechanisms[j].draw(rng), q[j]) - own[i]))
                    .sum()
            })
            .collect(),
    };
    x.iter()
        .zip(pulls)
        .map(|(xi, pull)| xi + perron.gamma() * pull)
        .collect()
}

/// The noiseless consensus target from state `x`: the formation `q`
/// recentred on the current state mean.
pub fn beta(x: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    if x.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: q.len(),
        });
    }
    let n = x.len() as f64;
    let shift = x.iter().sum::<f64>() / n - q.iter().sum::<f64>() / n;
    Ok(q.iter().map(|qi| qi + shift).collect())
}

/// Formation error `e = x − β(x)`.
pub fn formation_error(x: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    Ok(x.iter().zip(beta(x, q)?).map(|(a, b)| a - b).collect())
}

/// Agent-averaged squared error `(1/N) Σ_i e_i²` of a single realization.
pub fn aggregate_error(e: &[f64]) -> f64 {
    e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64
}

/// Per-step errors of a recorded trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMetrics {
    /// `e(k)` as an N×n matrix per step.
    pub errors: Vec<DMatrix<f64>>,
    /// `[dim][step]` agent-averaged squared error.
    pub e_agg_by_dim: Vec<Vec<f64>>,
    /// Per-step average of `e_agg_by_dim` over dimensions.
    pub e_agg: Vec<f64>,
}

pub fn error_metrics(states: &[DMatrix<f64>], formation: &FormationSpec) -> Result<ErrorMetrics> {
    let dims = formation.dims();
    let n = formation.node_count();
    let mut errors = Vec::with_capacity(states.len());
    let mut e_agg_by_dim = vec![Vec::with_capacity(states.len()); dims];
    let columns: Vec<Vec<f64>> = (0..dims).map(|l| formation.column(l)).collect();
    for state in states {
        if state.nrows() != n || state.ncols() != dims {
            return Err(Error::LengthMismatch {
                left: state.len(),
                right: n * dims,
            });
        }
        let mut e = DMatrix::zeros(n, dims);
        for (l, q) in columns.iter().enumerate() {
            let x: Vec<f64> = state.column(l).iter().copied().collect();
            let el = formation_error(&x, q)?;
            e_agg_by_dim[l].push(aggregate_error(&el));
            for (i, v) in el.into_iter().enumerate() {
                e[(i, l)] = v;
            }
        }
        errors.push(e);
    }
    let steps = states.len();
    let e_agg = (0..steps)
        .map(|k| e_agg_by_dim.iter().map(|s| s[k]).sum::<f64>() / dims as f64)
        .collect();
    Ok(ErrorMetrics {
        errors,
        e_agg_by_dim,
        e_agg,
    })
}

/// One recorded trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub trial: usize,
    pub master_seed: u64,
    /// `x(k)` as an N×n matrix, `k = 0..=horizon`.
    pub states: Vec<DMatrix<f64>>,
    pub metrics: ErrorMetrics,
}

/// A single scalar (one-dimension) trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarRun {
    pub states: Vec<Vec<f64>>,
    pub e_agg: Vec<f64>,
}

/// Configured private formation-control experiment.
#[derive(Debug, Clone)]
pub struct Simulation {
    perron: PerronMatrix,
    mechanisms: Vec<GaussianMechanism>,
    formation: FormationSpec,
    initial: DMatrix<f64>,
    horizon: usize,
    master_seed: u64,
    noise_model: NoiseModel,
}

impl Simulation {
    /// `sigmas[i]` is agent `i`'s noise scale (0 disables its noise).
    pub fn new(
        graph: &WeightedGraph,
        gamma: f64,
        sigmas: &[f64],
        formation: FormationSpec,
    ) -> Result<Self> {
        let n = graph.node_count();
        if sigmas.len() != n {
            return Err(Error::LengthMismatch {
                left: sigmas.len(),
                right: n,
            });
        }
        if formation.node_count() != n {
            return Err(Error::LengthMismatch {
                left: formation.node_count(),
                right: n,
            });
        }
        let perron = PerronMatrix::new(graph, gamma)?;
        let mechanisms = sigmas
            .iter()
            .map(|&s| GaussianMechanism::new(s))
            .collect::<Result<Vec<_>>>()?;
        let horizon = default_horizon(&perron)?;
        let initial = DMatrix::zeros(n, formation.dims());
        Ok(Self {
            perron,
            mechanisms,
            formation,
            initial,
            horizon,
            master_seed: 0,
            noise_model: NoiseModel::default(),
        })
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    pub fn with_noise_model(mut self, model: NoiseModel) -> Self {
        self.noise_model = model;
        self
    }

    pub fn with_initial(mut self, initial: DMatrix<f64>) -> Result<Self> {
        if initial.shape() != self.initial.shape() {
            return Err(Error::LengthMismatch {
                left: initial.len(),
                right: self.initial.len(),
            });
        }
        self.initial = initial;
        Ok(self)
    }

    pub fn perron(&self) -> &PerronMatrix {
        &self.perron
    }

    pub fn formation(&self) -> &FormationSpec {
        &self.formation
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.mechanisms.iter().map(GaussianMechanism::sigma).collect()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn noise_model(&self) -> NoiseModel {
        self.noise_model
    }

    pub fn node_count(&self) -> usize {
        self.perron.node_count()
    }

    /// Generator for `(trial, dimension)` under the master seed.
    pub fn noise_rng(&self, trial: usize, dim: usize) -> ChaCha8Rng {
        stream_rng(self.master_seed, ((trial as u64) << 16) | dim as u64)
    }

    /// Advances every dimension by one step in place. Agent `j` broadcasts
    /// `(x_j + v_j) − q_j`; agent `i` compares it with its own `x_i − q_i`.
    fn advance(&self, state: &mut DMatrix<f64>, rngs: &mut [ChaCha8Rng]) {
        let n = self.node_count();
        let gamma = self.perron.gamma();
        let anchors = self.formation.anchors();
        let mut shared = vec![0.0; n];
        let mut pulls = vec![0.0; n];
        for (l, rng) in rngs.iter_mut().enumerate() {
            let own: Vec<f64> = (0..n).map(|i| state[(i, l)] - anchors[(i, l)]).collect();
            match self.noise_model {
                NoiseModel::Broadcast => {
                    for j in 0..n {
                        let v = self.mechanisms[j].draw(rng);
                        shared[j] = shared_value(state[(j, l)], v, anchors[(j, l)]);
                    }
                    for (i, pull) in pulls.iter_mut().enumerate() {
                        *pull = self
                            .perron
                            .neighbors(i)
                            .iter()
                            .map(|&(j, w)| w * (shared[j] - own[i]))
                            .sum();
                    }
                }
                NoiseModel::PerLink => {
                    for (i, pull) in pulls.iter_mut().enumerate() {
                        *pull = self
                            .perron
                            .neighbors(i)
                            .iter()
                            .map(|&(j, w)| {
                                let v = self.mechanisms[j].draw(rng);
                                w * (shared_value(state[(j, l)], v, anchors[(j, l)]) - own[i])
                            })
                            .sum();
                    }
                }
            }
            for (i, pull) in pulls.iter().enumerate() {
                state[(i, l)] += gamma * pull;
            }
        }
    }

    /// Runs trial `trial` over all dimensions and records the trajectory.
    pub fn run_trial(&self, trial: usize) -> Result<SimulationRun> {
        let mut rngs: Vec<ChaCha8Rng> = (0..self.formation.dims())
            .map(|l| self.noise_rng(trial, l))
            .collect();
        let mut state = self.initial.clone();
        let mut states = Vec::with_capacity(self.horizon + 1);
        states.push(state.clone());
        for _ in 0..self.horizon {
            self.advance(&mut state, &mut rngs);
            states.push(state.clone());
        }
        let metrics = error_metrics(&states, &self.formation)?;
        Ok(SimulationRun {
            trial,
            master_seed: self.master_seed,
            states,
            metrics,
        })
    }

    /// Runs one dimension of trial `trial` as a standalone scalar protocol.
    pub fn run_scalar(&self, trial: usize, dim: usize) -> Result<ScalarRun> {
        let q = self.formation.column(dim);
        let mut rng = self.noise_rng(trial, dim);
        let mut x: Vec<f64> = (0..self.node_count()).map(|i| self.initial[(i, dim)]).collect();
        let mut states = Vec::with_capacity(self.horizon + 1);
        let mut e_agg = Vec::with_capacity(self.horizon + 1);
        e_agg.push(aggregate_error(&formation_error(&x, &q)?));
        states.push(x.clone());
        for _ in 0..self.horizon {
            x = formation_step(&x, &q, &self.perron, &self.mechanisms, self.noise_model, &mut rng);
            e_agg.push(aggregate_error(&formation_error(&x, &q)?));
            states.push(x.clone());
        }
        Ok(ScalarRun { states, e_agg })
    }

    /// Dimension-averaged `e_agg(k)` of one trial without storing states.
    pub fn trial_error_series(&self, trial: usize) -> Vec<f64> {
        let dims = self.formation.dims();
        let columns: Vec<Vec<f64>> = (0..dims).map(|l| self.formation.column(l)).collect();
        let mut rngs: Vec<ChaCha8Rng> = (0..dims).map(|l| self.noise_rng(trial, l)).collect();
        let mut state = self.initial.clone();
        let series_point = |state: &DMatrix<f64>| -> f64 {
            columns
                .iter()
                .enumerate()
                .map(|(l, q)| {
                    let x: Vec<f64> = state.column(l).iter().copied().collect();
                    aggregate_error(&formation_error(&x, q).expect("dimensions checked"))
                })
                .sum::<f64>()
                / dims as f64
        };
        let mut series = Vec::with_capacity(self.horizon + 1);
        series.push(series_point(&state));
        for _ in 0..self.horizon {
            self.advance(&mut state, &mut rngs);
            series.push(series_point(&state));
        }
        series
    }
}

/// `⌈50 / (1 − ρ)⌉` steps, where `ρ` is the largest non-unit eigenvalue
/// modulus of `P`. Equals `50/(γλ2)` whenever the slow mode dominates.
pub fn default_horizon(perron: &PerronMatrix) -> Result<usize> {
    let rho = perron.mixing_rate()?;
    Ok((DEFAULT_HORIZON_MIXING_TIMES / (1.0 - rho) - 1e-9).ceil() as usize)
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn single(x: f64) -> Self {
        Self {
            count: 1.0,
            mean: x,
            m2: 0.0,
        }
    }

    fn merge(self, other: Self) -> Self {
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        Self {
            count,
            mean: self.mean + delta * other.count / count,
            m2: self.m2 + other.m2 + delta * delta * self.count * other.count / count,
        }
    }
}

/// Trial-averaged error series with a normal-approximation confidence
/// half-width per step.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub mean: Vec<f64>,
    pub half_width: Vec<f64>,
}

/// Runs `trials` independent trials in parallel and averages `e_agg(k)`
/// pointwise. Output is independent of the thread count.
pub fn monte_carlo(sim: &Simulation, trials: usize) -> Result<MonteCarloSummary> {
    if trials == 0 {
        return Err(Error::Domain {
            name: "trials",
            value: 0.0,
            expected: "[1, inf)",
        });
    }
    let chunk_starts: Vec<usize> = (0..trials).step_by(TRIAL_CHUNK).collect();
    let chunks: Vec<Vec<Moments>> = chunk_starts
        .par_iter()
        .map(|&start| {
            let end = (start + TRIAL_CHUNK).min(trials);
            let mut acc: Option<Vec<Moments>> = None;
            for trial in start..end {
                let series = sim.trial_error_series(trial);
                acc = Some(match acc {
                    None => series.into_iter().map(Moments::single).collect(),
                    Some(prev) => prev
                        .into_iter()
                        .zip(series)
                        .map(|(m, x)| m.merge(Moments::single(x)))
                        .collect(),
                });
            }
            acc.expect("chunks are non-empty")
        })
        .collect();
    let merged = chunks
        .into_iter()
        .reduce(|a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect())
        .expect("at least one chunk");
    let mean = merged.iter().map(|m| m.mean).collect();
    let half_width = merged
        .iter()
        .map(|m| {
            if m.count < 2.0 {
                0.0
            } else {
                CI_Z * (m.m2 / (m.count - 1.0) / m.count).sqrt()
            }
        })
        .collect();
    Ok(MonteCarloSummary {
        trials,
        mean,
        half_width,
    })
}

/// Steady-state error estimate from a trial-averaged series.
#[derive(Debug, Clone, PartialEq)]
pub struct EssEstimate {
    /// Maximum of the averaged series over the tail window.
    pub value: f64,
    /// Confidence half-width at the maximizing step.
    pub half_width: f64,
    pub argmax_step: usize,
    pub tail_start: usize,
    pub tail_mean: f64,
    /// Least-squares slope of the tail, per 100 steps.
    pub slope_per_100: f64,
    /// False when the tail trends by ≥ 1% of its mean per 100 steps and the
    /// fitted drift across the tail exceeds the mean confidence half-width.
    pub mixing_ok: bool,
}

pub fn estimate_from_summary(summary: &MonteCarloSummary, tail_fraction: f64) -> Result<EssEstimate> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::Domain {
            name: "tail_fraction",
            value: tail_fraction,
            expected: "(0, 1]",
        });
    }
    let len = summary.mean.len();
    let tail_len = ((len as f64 * tail_fraction).ceil() as usize).clamp(1, len);
    let tail_start = len - tail_len;
    let tail = &summary.mean[tail_start..];
    let (argmax_offset, &value) = tail
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("tail is non-empty");
    let tail_mean = tail.iter().sum::<f64>() / tail_len as f64;
    let slope = least_squares_slope(tail);
    let slope_per_100 = slope * 100.0;
    let drift = slope.abs() * (tail_len - 1) as f64;
    let noise = summary.half_width[tail_start..].iter().sum::<f64>() / tail_len as f64;
    let mixing_ok = value < 1e-12 || slope_per_100.abs() < 0.01 * tail_mean || drift <= noise;
    if !mixing_ok {
        log::warn!(
            "tail of e_agg still trending ({slope_per_100:e} per 100 steps vs mean {tail_mean:e}); horizon may be too short"
        );
    }
    Ok(EssEstimate {
        value,
        half_width: summary.half_width[tail_start + argmax_offset],
        argmax_step: tail_start + argmax_offset,
        tail_start,
        tail_mean,
        slope_per_100,
        mixing_ok,
    })
}

/// Monte Carlo steady-state error: trial-average `e_agg(k)`, then take the
/// maximum over the final `tail_fraction` of the horizon.
pub fn estimate_ess(sim: &Simulation, trials: usize, tail_fraction: f64) -> Result<EssEstimate> {
    estimate_from_summary(&monte_carlo(sim, trials)?, tail_fraction)
}

fn least_squares_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = ys.iter().sum::<f64>() / n;
    let (num, den) = ys.iter().enumerate().fold((0.0, 0.0), |(num, den), (k, &y)| {
        let dx = k as f64 - x_mean;
        (num + dx * (y - y_mean), den + dx * dx)
    });
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Topology;
    use crate::privacy::stream_rng;
    use rand_distr::StandardNormal;

    fn star5() -> (WeightedGraph, PerronMatrix) {
        let g = WeightedGraph::standard(Topology::Star, 5, 1.0).unwrap();
        let p = PerronMatrix::new(&g, 0.2).unwrap();
        (g, p)
    }

    #[test]
    fn consensus_is_a_fixed_point() {
        let (_, p) = star5();
        let x = vec![3.5; 5];
        let next = noiseless_step(&x, &p);
        assert!(next.iter().all(|v| (v - 3.5).abs() < 1e-14));
    }

    #[test]
    fn noiseless_step_preserves_mean_and_converges() {
        let g = WeightedGraph::standard(Topology::Line, 6, 1.0).unwrap();
        let p = PerronMatrix::new(&g, 0.4).unwrap();
        let mut rng = stream_rng(5, 0);
        let x0: Vec<f64> = (0..6).map(|_| rng.sample::<f64, _>(StandardNormal) * 10.0).collect();
        let mean0 = x0.iter().sum::<f64>() / 6.0;
        let mut x = x0.clone();
        for _ in 0..2000 {
            x = noiseless_step(&x, &p);
            assert!((x.iter().sum::<f64>() / 6.0 - mean0).abs() < 1e-12);
        }
        assert!(x.iter().all(|v| (v - mean0).abs() < 1e-9));
    }

    #[test]
    fn zero_noise_matches_noiseless() {
        let (_, p) = star5();
        let mech = vec![GaussianMechanism::new(0.0).unwrap(); 5];
        let x = vec![1.0, -2.0, 0.5, 4.0, 3.0];
        let mut rng = stream_rng(1, 1);
        assert_eq!(private_step(&x, &p, &mech, &mut rng), node_step(&x, &p, &[0.0; 5]));
        let a = private_step(&x, &p, &mech, &mut rng);
        let b = noiseless_step(&x, &p);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn beta_identities() {
        let x = vec![1.0, 2.0, 6.0];
        assert_eq!(beta(&x, &[0.0; 3]).unwrap(), vec![3.0; 3]);
        let q = vec![4.0, -1.0, 0.5];
        let b = beta(&q, &q).unwrap();
        for (u, v) in b.iter().zip(&q) {
            assert!((u - v).abs() < 1e-15);
        }
        assert!(beta(&x, &[0.0; 2]).is_err());
    }

    #[test]
    fn aggregate_error_convention_is_agent_average() {
        // ‖u‖² = N  ⇒  e_agg = 1
        let q = vec![0.0, 1.0, 2.0, 3.0];
        let u = vec![1.0, -1.0, 1.0, -1.0];
        let x: Vec<f64> = beta(&q, &q)
            .unwrap()
            .iter()
            .zip(&u)
            .map(|(b, v)| b + v)
            .collect();
        let e = formation_error(&x, &q).unwrap();
        assert!((aggregate_error(&e) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn formation_from_offsets_roundtrip() {
        let g = WeightedGraph::standard(Topology::Cycle, 4, 1.0).unwrap();
        let spec = FormationSpec::new(DMatrix::from_row_slice(
            4,
            2,
            &[0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0],
        ))
        .unwrap();
        let offsets: Vec<_> = g
            .edges()
            .iter()
            .map(|e| (e.a, e.b, spec.offset(e.a, e.b)))
            .collect();
        let rebuilt = FormationSpec::from_offsets(&g, 2, &offsets).unwrap();
        assert_eq!(rebuilt, spec);
        for e in g.edges() {
            let fwd = spec.offset(e.a, e.b);
            let back = spec.offset(e.b, e.a);
            assert!(fwd.iter().zip(&back).all(|(a, b)| a == &-b));
        }
    }

    #[test]
    fn inconsistent_offsets_rejected() {
        let g = WeightedGraph::standard(Topology::Cycle, 3, 1.0).unwrap();
        let offsets = vec![
            (0, 1, vec![1.0]),
            (1, 2, vec![1.0]),
            (2, 0, vec![1.0]), // should be -2 to close the loop
        ];
        assert!(FormationSpec::from_offsets(&g, 1, &offsets).is_err());
        let asym = vec![(0, 1, vec![1.0]), (1, 0, vec![2.0])];
        let line = WeightedGraph::standard(Topology::Line, 2, 1.0).unwrap();
        assert!(FormationSpec::from_offsets(&line, 1, &asym).is_err());
    }

    #[test]
    fn trajectory_length_and_nonnegative_error() {
        let (g, _) = star5();
        let sim = Simulation::new(&g, 0.2, &[1.0; 5], FormationSpec::square_with_center())
            .unwrap()
            .with_horizon(40)
            .with_seed(3);
        let run = sim.run_trial(0).unwrap();
        assert_eq!(run.states.len(), 41);
        assert_eq!(run.metrics.e_agg.len(), 41);
        assert!(run.metrics.e_agg.iter().all(|&e| e >= 0.0));
        assert_eq!(run.metrics.e_agg, sim.trial_error_series(0));
    }

    #[test]
    fn monte_carlo_independent_of_thread_count() {
        let (g, _) = star5();
        let sim = Simulation::new(&g, 0.2, &[2.0; 5], FormationSpec::square_with_center())
            .unwrap()
            .with_horizon(30)
            .with_seed(8);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| monte_carlo(&sim, 100).unwrap());
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| monte_carlo(&sim, 100).unwrap());
        assert_eq!(one, many);
    }

    #[test]
    fn estimator_rejects_bad_inputs() {
        let (g, _) = star5();
        let sim = Simulation::new(&g, 0.2, &[1.0; 5], FormationSpec::square_with_center()).unwrap();
        assert!(monte_carlo(&sim, 0).is_err());
        let summary = MonteCarloSummary {
            trials: 1,
            mean: vec![1.0, 1.0],
            half_width: vec![0.0, 0.0],
        };
        assert!(estimate_from_summary(&summary, 0.0).is_err());
        assert!(estimate_from_summary(&summary, 1.5).is_err());
    }

    #[test]
    fn slope_detects_trend() {
        let rising: Vec<f64> = (0..50).map(|k| 1.0 + 0.1 * k as f64).collect();
        assert!((least_squares_slope(&rising) - 0.1).abs() < 1e-12);
        let summary = MonteCarloSummary {
            trials: 10,
            mean: rising,
            half_width: vec![0.0; 50],
        };
        assert!(!estimate_from_summary(&summary, 0.5).unwrap().mixing_ok);
    }

    #[test]
    fn default_horizon_for_star() {
        let (_, p) = star5();
        // rho = 0.8 ⇒ 50 / 0.2
        assert_eq!(default_horizon(&p).unwrap(), 250);
    }
}
