use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::layers::{mean_rows, Linear, MessagePass, Mlp};
use super::params::ParameterStore;
use super::tape::{RowMix, Tape, Var};
use super::ApproxError;
use crate::gmdp::Observation;
use crate::graph::InfluenceGraph;
use crate::rng::stream;

/// Undirected neighbourhoods of the agents, self excluded, as mean weights.
#[derive(Debug, Clone)]
pub struct AgentGraph {
    n: usize,
    neighbours: RowMix,
}

impl AgentGraph {
    pub fn new(graph: &InfluenceGraph) -> Self {
        let sets: Vec<Vec<usize>> = (0..graph.n()).map(|i| graph.undirected_neighbours(i)).collect();
        Self {
            n: graph.n(),
            neighbours: mean_rows(&sets),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

pub struct CriticInput<'a> {
    pub obs: &'a Observation,
    pub agents: &'a AgentGraph,
}

/// A value estimator with a flat parameter vector.
pub trait Critic: Sync {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn values(&self, input: &CriticInput<'_>) -> Result<Vec<f64>, ApproxError>;
    /// `∇_φ Σ_i seed_i V_i`.
    fn value_vjp(&self, input: &CriticInput<'_>, seed: &[f64]) -> Result<Vec<f64>, ApproxError>;

    /// Values and `∇_φ Σ_i s_i V_i` where the seed `s` may depend on the values.
    fn value_and_vjp(
        &self,
        input: &CriticInput<'_>,
        seed: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>), ApproxError> {
        let v = self.values(input)?;
        let s = seed(&v);
        let g = self.value_vjp(input, &s)?;
        Ok((v, g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticConfig {
    pub obs_dim: usize,
    pub hidden: usize,
    /// Message-passing layers over the symmetrised agent graph.
    pub layers: usize,
    /// Average the per-agent outputs and broadcast the mean.
    pub pooled: bool,
}

/// MLP encoder, `L` mean-aggregation layers and a linear head.
#[derive(Debug, Clone)]
pub struct GraphCritic {
    cfg: CriticConfig,
    store: ParameterStore,
    encoder: Mlp,
    layers: Vec<MessagePass>,
    head: Linear,
}

impl GraphCritic {
    pub fn new(cfg: CriticConfig, seed: u64) -> Result<Self, ApproxError> {
        if cfg.obs_dim == 0 || cfg.hidden == 0 {
            return Err(ApproxError::Config("critic dimensions must be positive".into()));
        }
        let mut rng = stream(seed, "init.critic", 0);
        let mut store = ParameterStore::new(seed);
        let encoder = Mlp::new(&mut store, &mut rng, "critic.encoder", cfg.obs_dim, cfg.hidden, cfg.hidden);
        let layers = (0..cfg.layers)
            .map(|k| MessagePass::new(&mut store, &mut rng, &format!("critic.layer{k}"), cfg.hidden))
            .collect();
        let head = Linear::new(&mut store, &mut rng, "critic.head", cfg.hidden, 1);
        Ok(Self {
            cfg,
            store,
            encoder,
            layers,
            head,
        })
    }

    pub fn config(&self) -> &CriticConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn load(&mut self, store: ParameterStore) -> Result<(), ApproxError> {
        if store.slices() != self.store.slices() {
            return Err(ApproxError::Incompatible("critic parameter layout differs".into()));
        }
        self.store = store;
        Ok(())
    }

    /// Per-agent values as an `n × 1` column on `tape`.
    pub fn forward(&self, tape: &mut Tape, features: &Array2<f64>, agents: &AgentGraph) -> Result<Var, ApproxError> {
        if features.ncols() != self.cfg.obs_dim {
            return Err(ApproxError::Dimension {
                what: "critic input",
                expected: self.cfg.obs_dim,
                got: features.ncols(),
            });
        }
        if features.nrows() != agents.n {
            return Err(ApproxError::Dimension {
                what: "agent count",
                expected: agents.n,
                got: features.nrows(),
            });
        }
        let x = tape.input(features.clone())?;
        let enc = self.encoder.forward(tape, &self.store, x);
        let mut h = tape.relu(enc);
        for layer in &self.layers {
            let mixed = tape.mix(h, agents.neighbours.clone());
            let a = layer.self_map.forward(tape, &self.store, h);
            let b = layer.msg_map.forward(tape, &self.store, mixed);
            let z = tape.add(a, b);
            h = tape.relu(z);
        }
        let v = self.head.forward(tape, &self.store, h);
        if self.cfg.pooled {
            let n = agents.n;
            let w = 1.0 / n as f64;
            let all: Vec<(usize, f64)> = (0..n).map(|k| (k, w)).collect();
            Ok(tape.mix(v, Arc::new(vec![all; n])))
        } else {
            Ok(v)
        }
    }
}

impl Critic for GraphCritic {
    fn params(&self) -> &[f64] {
        self.store.values()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.store.values_mut()
    }

    fn values(&self, input: &CriticInput<'_>) -> Result<Vec<f64>, ApproxError> {
        let mut tape = Tape::new();
        let v = self.forward(&mut tape, &input.obs.features, input.agents)?;
        Ok(tape.value(v).iter().copied().collect())
    }

    fn value_vjp(&self, input: &CriticInput<'_>, seed: &[f64]) -> Result<Vec<f64>, ApproxError> {
        let mut tape = Tape::new();
        let v = self.forward(&mut tape, &input.obs.features, input.agents)?;
        let seed = Array2::from_shape_vec((seed.len(), 1), seed.to_vec()).expect("column");
        let out = tape.weighted_sum(v, seed);
        Ok(tape.backward(out, self.store.len()))
    }

    fn value_and_vjp(
        &self,
        input: &CriticInput<'_>,
        seed: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>), ApproxError> {
        let mut tape = Tape::new();
        let v = self.forward(&mut tape, &input.obs.features, input.agents)?;
        let values: Vec<f64> = tape.value(v).iter().copied().collect();
        let s = seed(&values);
        let s = Array2::from_shape_vec((s.len(), 1), s).expect("column");
        let out = tape.weighted_sum(v, s);
        Ok((values, tape.backward(out, self.store.len())))
    }
}

/// One value per (state, agent), indexed by the one-hot state encoded in the
/// first observation row.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularCritic {
    states: usize,
    agents: usize,
    table: Vec<f64>,
}

impl TabularCritic {
    pub fn new(states: usize, agents: usize) -> Self {
        Self {
            states,
            agents,
            table: vec![0.0; states * agents],
        }
    }

    pub fn from_table(values: &Array2<f64>) -> Self {
        Self {
            states: values.nrows(),
            agents: values.ncols(),
            table: values.iter().copied().collect(),
        }
    }

    pub fn table(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.states, self.agents), self.table.clone()).expect("shape")
    }

    fn state_of(&self, obs: &Observation) -> Result<usize, ApproxError> {
        let row = obs.features.row(0);
        if row.len() != self.states {
            return Err(ApproxError::Dimension {
                what: "one-hot state",
                expected: self.states,
                got: row.len(),
            });
        }
        row.iter()
            .position(|&v| v == 1.0)
            .ok_or(ApproxError::Config("observation is not one-hot".into()))
    }
}

impl Critic for TabularCritic {
    fn params(&self) -> &[f64] {
        &self.table
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.table
    }

    fn values(&self, input: &CriticInput<'_>) -> Result<Vec<f64>, ApproxError> {
        let s = self.state_of(input.obs)?;
        Ok(self.table[s * self.agents..(s + 1) * self.agents].to_vec())
    }

    fn value_vjp(&self, input: &CriticInput<'_>, seed: &[f64]) -> Result<Vec<f64>, ApproxError> {
        let s = self.state_of(input.obs)?;
        let mut g = vec![0.0; self.table.len()];
        g[s * self.agents..(s + 1) * self.agents].copy_from_slice(seed);
        Ok(g)
    }
}
