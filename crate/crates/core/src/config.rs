//! Run configuration file (YAML).
//!
//! ```yaml
//! graph: {kind: star, n: 5, w: 1.0}       # or: {nodes: 5, edges: [[1, 2, 1.0], ...]}
//! gamma: 0.2
//! horizon: 100                            # optional; default ⌈50/(1 − ρ)⌉
//! trials: 1000                            # optional
//! seed: 7                                 # optional
//! privacy: {epsilon: 1.0986, delta: 0.00135, b: 2.0}   # or a per-agent list
//! sigma: 0.0                              # optional noise-scale override (scalar or list)
//! noise_model: broadcast                  # or per_link
//! formation: [[0, 0], [-20, 20], [20, 20], [20, -20], [-20, -20]]
//! initial: [[0, 0], ...]                  # optional, default all zeros
//! ```
//!
//! Edge endpoints and formation rows are 1-indexed / ordered by agent.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{FormationSpec, NoiseModel, Simulation, DEFAULT_TAIL_FRACTION, DEFAULT_TRIALS};
use crate::error::{Error, Result};
use crate::graph::{Topology, WeightedGraph};
use crate::markov::PerronMatrix;
use crate::privacy::PrivacyParams;

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    Named {
        kind: Topology,
        n: usize,
        #[serde(default = "unit_weight")]
        w: f64,
    },
    Explicit {
        nodes: usize,
        edges: Vec<(usize, usize, f64)>,
    },
}

impl GraphSpec {
    pub fn build(&self) -> Result<WeightedGraph> {
        match self {
            GraphSpec::Named { kind, n, w } => WeightedGraph::standard(*kind, *n, *w),
            GraphSpec::Explicit { nodes, edges } => WeightedGraph::from_one_indexed(*nodes, edges),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PrivacySpec {
    Homogeneous(PrivacyParams),
    PerAgent(Vec<PrivacyParams>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Shared(f64),
    PerAgent(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphSpec,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_fraction: Option<f64>,
    pub privacy: PrivacySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<SigmaSpec>,
    /// `broadcast` (default) or `per_link`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_model: Option<NoiseModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formation: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// A config that passed validation, with everything needed to run.
#[derive(Debug, Clone)]
pub struct ValidatedConfig {
    pub graph: WeightedGraph,
    pub perron: PerronMatrix,
    pub params: Vec<PrivacyParams>,
    /// Noise scales the agents actually use.
    pub sigmas: Vec<f64>,
    pub formation: FormationSpec,
    pub trials: usize,
    pub seed: u64,
    pub tail_fraction: f64,
    pub simulation: Simulation,
}

impl RunConfig {
    /// Five-agent star with unit weights, `γ = 1/5`, `(ε, δ, b) = (ln 3,
    /// 0.00135, 2)`, square-with-center formation, 100 steps × 1000 trials.
    pub fn demo() -> Self {
        let formation = FormationSpec::square_with_center();
        Self {
            graph: GraphSpec::Named {
                kind: Topology::Star,
                n: 5,
                w: 1.0,
            },
            gamma: 0.2,
            horizon: Some(100),
            trials: Some(1000),
            seed: Some(2021),
            tail_fraction: None,
            privacy: PrivacySpec::Homogeneous(PrivacyParams {
                epsilon: crate::privacy::LN_3,
                delta: 0.00135,
                b: 2.0,
            }),
            sigma: None,
            noise_model: None,
            formation: Some(
                formation
                    .anchors()
                    .row_iter()
                    .map(|r| r.iter().copied().collect())
                    .collect(),
            ),
            initial: None,
            out: None,
        }
    }

    pub fn from_yaml_str(text: &str) -> Result<Self> {
        serde_yaml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_yaml_str(&text)
    }

    pub fn to_yaml(&self) -> Result<String> {
        serde_yaml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn privacy_params(&self, n: usize) -> Result<Vec<PrivacyParams>> {
        let params = match &self.privacy {
            PrivacySpec::Homogeneous(p) => vec![*p; n],
            PrivacySpec::PerAgent(list) => {
                if list.len() != n {
                    return Err(Error::Config(format!(
                        "privacy list has {} entries for {n} agents",
                        list.len()
                    )));
                }
                list.clone()
            }
        };
        for p in &params {
            PrivacyParams::new(p.epsilon, p.delta, p.b)?;
        }
        Ok(params)
    }

    /// Checks every precondition (graph, step size, privacy ranges, matrix
    /// shapes) and builds the simulation.
    pub fn validate(&self) -> Result<ValidatedConfig> {
        let graph = self.graph.build()?;
        let n = graph.node_count();
        let perron = PerronMatrix::new(&graph, self.gamma)?;
        let params = self.privacy_params(n)?;
        let minimal: Vec<f64> = params
            .iter()
            .map(PrivacyParams::noise_scale)
            .collect::<Result<_>>()?;
        let sigmas = match &self.sigma {
            None => minimal.clone(),
            Some(SigmaSpec::Shared(s)) => vec![*s; n],
            Some(SigmaSpec::PerAgent(list)) => {
                if list.len() != n {
                    return Err(Error::Config(format!(
                        "sigma list has {} entries for {n} agents",
                        list.len()
                    )));
                }
                list.clone()
            }
        };
        if sigmas.iter().all(|&s| s == 0.0) {
            log::info!("noise disabled for every agent; the run is not private");
        }
        for (i, (&s, &m)) in sigmas.iter().zip(&minimal).enumerate() {
            if s > 0.0 && s < m {
                log::warn!(
                    "agent {} noise scale {s} is below the private minimum {m}; its trajectory is not protected at the configured level",
                    i + 1
                );
            }
        }
        let formation = match &self.formation {
            Some(rows) => FormationSpec::from_rows(rows)?,
            None => FormationSpec::consensus(n, 1)?,
        };
        if formation.node_count() != n {
            return Err(Error::Config(format!(
                "formation has {} rows for {n} agents",
                formation.node_count()
            )));
        }
        let mut simulation = Simulation::new(&graph, self.gamma, &sigmas, formation.clone())?
            .with_seed(self.seed.unwrap_or(0))
            .with_noise_model(self.noise_model.unwrap_or_default());
        if let Some(h) = self.horizon {
            simulation = simulation.with_horizon(h);
        }
        if let Some(rows) = &self.initial {
            let dims = formation.dims();
            if rows.len() != n || rows.iter().any(|r| r.len() != dims) {
                return Err(Error::Config(format!(
                    "initial state must be {n} rows of {dims} coordinates"
                )));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            simulation = simulation.with_initial(DMatrix::from_row_slice(n, dims, &flat))?;
        }
        let trials = self.trials.unwrap_or(DEFAULT_TRIALS);
        if trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let tail_fraction = self.tail_fraction.unwrap_or(DEFAULT_TAIL_FRACTION);
        if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "tail_fraction {tail_fraction} outside (0, 1]"
            )));
        }
        Ok(ValidatedConfig {
            graph,
            perron,
            params,
            sigmas,
            formation,
            trials,
            seed: self.seed.unwrap_or(0),
            tail_fraction,
            simulation,
        })
    }
}
