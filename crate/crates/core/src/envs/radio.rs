//! Transmit power control over a wireless interference graph, and its
//! edge-GMDP in which every communication edge decides whether to pass a
//! message.
//!
//! Each node is a transmitter-receiver pair with user parameters `α, β`,
//! a received-to-transmitted power ratio `l`, all driven by bounded
//! Gaussian random walks. A node transmitting `Y_i` while sending `|C_i|`
//! messages draws `p_i = Y_i + p_m|C_i| + p₀` and sees interference
//! `𝓘_i = Σ_{j∈N_i} H_ji p_j + N₀`.
//!
//! Node observation layout: normalised `α`, `β`, `l`, and
//! `log10(𝓘^{t−1} / N₀)`. Edge agent `(i, j)` observes both endpoint rows
//! and a self-edge flag.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::gmdp::{ActionSpace, CommView, EnvError, GmdpEnvironment, JointAction, Observation, StepOutcome};
use crate::graph::edge_transform_with_self_edges;
use crate::graph::{ChannelGains, Generated};
use crate::graph::{EdgeGraph, InfluenceGraph};
use crate::rng::SimRng;

pub const RADIO_NODE_DIM: usize = 4;
pub const RADIO_EDGE_DIM: usize = 2 * RADIO_NODE_DIM + 1;

/// Bounded Gaussian random walk parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bgrw {
    pub min: f64,
    pub max: f64,
    pub sigma: f64,
}

impl Bgrw {
    pub fn new(min: f64, max: f64, sigma: f64) -> Result<Self, EnvError> {
        let w = Self { min, max, sigma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.min < self.max && self.min.is_finite() && self.max.is_finite()) {
            return Err(EnvError::Config(format!("degenerate interval [{}, {}]", self.min, self.max)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(EnvError::Config("sigma must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn initial(&self, rng: &mut SimRng) -> f64 {
        rng.random_range(self.min..=self.max)
    }

    /// `Clip(y, min, max)` with `y ~ N(x, σ²)`.
    pub fn step(&self, x: f64, rng: &mut SimRng) -> f64 {
        let y = if self.sigma > 0.0 {
            Normal::new(x, self.sigma).expect("finite sigma").sample(rng)
        } else {
            x
        };
        y.clamp(self.min, self.max)
    }

    /// `(2x − max − min) / (4√3 (max − min))`.
    pub fn normalise(&self, x: f64) -> f64 {
        (2.0 * x - self.max - self.min) / (4.0 * 3f64.sqrt() * (self.max - self.min))
    }
}

pub fn bgrw_step(x: f64, min: f64, max: f64, sigma: f64, rng: &mut SimRng) -> Result<f64, EnvError> {
    Ok(Bgrw::new(min, max, sigma)?.step(x, rng))
}

pub fn bgrw_normalise(x: f64, min: f64, max: f64) -> Result<f64, EnvError> {
    Ok(Bgrw::new(min, max, 0.0)?.normalise(x))
}

/// `q_{α,β}(c) = (1 − e^{−c/β}) / (1 + e^{(α − c)/β})`.
pub fn quality(alpha: f64, beta: f64, c: f64) -> f64 {
    (1.0 - (-c / beta).exp()) / (1.0 + ((alpha - c) / beta).exp())
}

/// `log₂(1 + l·Y / 𝓘)`.
pub fn capacity(l: f64, y: f64, interference: f64) -> f64 {
    (1.0 + l * y / interference).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadioObjective {
    /// Reward `q`.
    ServiceQuality,
    /// Reward `q / p`.
    EnergyEfficiency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioConfig {
    pub objective: RadioObjective,
    pub alpha: Bgrw,
    pub beta: Bgrw,
    pub gain: Bgrw,
    /// Walk followed by the transmit powers `Y` in the edge-GMDP.
    pub power: Bgrw,
    pub noise: f64,
    pub base_power: f64,
    /// Power drawn per message.
    pub p_m: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            objective: RadioObjective::ServiceQuality,
            alpha: Bgrw {
                min: 0.5,
                max: 2.0,
                sigma: 0.05,
            },
            beta: Bgrw {
                min: 0.2,
                max: 1.0,
                sigma: 0.05,
            },
            gain: Bgrw {
                min: 0.2,
                max: 1.0,
                sigma: 0.05,
            },
            power: Bgrw {
                min: 0.1,
                max: 1.0,
                sigma: 0.05,
            },
            noise: 0.05,
            base_power: 0.1,
            p_m: 0.02,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        for w in [self.alpha, self.beta, self.gain, self.power] {
            w.validate()?;
        }
        if self.beta.min <= 0.0 || self.gain.min < 0.0 || self.gain.max > 1.0 || self.power.min < 0.0 {
            return Err(EnvError::Config("need β > 0, l ∈ [0, 1] and Y ≥ 0".into()));
        }
        if !(self.noise > 0.0 && self.base_power > 0.0 && self.p_m >= 0.0) {
            return Err(EnvError::Config("need N₀ > 0, p₀ > 0 and p_m ≥ 0".into()));
        }
        Ok(())
    }
}

/// The node-level wireless network.
#[derive(Debug, Clone)]
pub struct Radio {
    graph: InfluenceGraph,
    channel: ChannelGains,
    cfg: RadioConfig,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gain: Vec<f64>,
    interference: Vec<f64>,
    powers: Vec<f64>,
}

impl Radio {
    pub fn new(graph: &InfluenceGraph, channel: ChannelGains, cfg: RadioConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let graph = graph.symmetrised();
        let n = graph.n();
        if channel.gains.len() != n {
            return Err(EnvError::Config("channel gains do not match the graph".into()));
        }
        if channel.gains.iter().flatten().any(|(_, h)| !(h.is_finite() && *h >= 0.0)) {
            return Err(EnvError::NonFinite("channel gains"));
        }
        Ok(Self {
            graph,
            channel,
            alpha: vec![cfg.alpha.min; n],
            beta: vec![cfg.beta.min; n],
            gain: vec![cfg.gain.min; n],
            interference: vec![cfg.noise; n],
            powers: vec![cfg.base_power; n],
            cfg,
        })
    }

    pub fn from_generated(g: &Generated, cfg: RadioConfig) -> Result<Self, EnvError> {
        let channel = g
            .channel
            .clone()
            .ok_or_else(|| EnvError::Config("radio networks need channel gains".into()))?;
        Self::new(&g.graph, channel, cfg)
    }

    pub fn graph(&self) -> &InfluenceGraph {
        &self.graph
    }

    pub fn config(&self) -> &RadioConfig {
        &self.cfg
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// Interference of the last step.
    pub fn interference(&self) -> &[f64] {
        &self.interference
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn user_parameters(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.alpha, &self.beta, &self.gain)
    }

    pub fn set_user_parameters(&mut self, alpha: &[f64], beta: &[f64], gain: &[f64]) {
        self.alpha.copy_from_slice(alpha);
        self.beta.copy_from_slice(beta);
        self.gain.copy_from_slice(gain);
    }

    pub fn reset(&mut self, rng: &mut SimRng) {
        for i in 0..self.n() {
            self.alpha[i] = self.cfg.alpha.initial(rng);
            self.beta[i] = self.cfg.beta.initial(rng);
            self.gain[i] = self.cfg.gain.initial(rng);
        }
        self.interference.fill(self.cfg.noise);
        self.powers.fill(self.cfg.base_power);
    }

    pub fn observe_nodes(&self) -> Array2<f64> {
        let mut f = Array2::zeros((self.n(), RADIO_NODE_DIM));
        for i in 0..self.n() {
            f[[i, 0]] = self.cfg.alpha.normalise(self.alpha[i]);
            f[[i, 1]] = self.cfg.beta.normalise(self.beta[i]);
            f[[i, 2]] = self.cfg.gain.normalise(self.gain[i]);
            f[[i, 3]] = (self.interference[i] / self.cfg.noise).log10();
        }
        f
    }

    /// Transmit with powers `y` and per-node message counts, returning the
    /// per-node rewards; then advance the random walks.
    pub fn node_step(&mut self, y: &[f64], messages: &[usize], rng: &mut SimRng) -> Result<Vec<f64>, EnvError> {
        let n = self.n();
        if y.len() != n || messages.len() != n {
            return Err(EnvError::Config(format!("expected {n} transmit powers and message counts")));
        }
        if let Some(i) = y.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(EnvError::InvalidAction {
                agent: i,
                reason: "transmit power must be finite and non-negative".into(),
            });
        }
        for i in 0..n {
            self.powers[i] = y[i] + self.cfg.p_m * messages[i] as f64 + self.cfg.base_power;
        }
        for i in 0..n {
            self.interference[i] = self.channel.gains[i].iter().map(|&(j, h)| h * self.powers[j]).sum::<f64>() + self.cfg.noise;
        }
        let rewards: Vec<f64> = (0..n)
            .map(|i| {
                let c = capacity(self.gain[i], y[i], self.interference[i]);
                let q = quality(self.alpha[i], self.beta[i], c);
                match self.cfg.objective {
                    RadioObjective::ServiceQuality => q,
                    RadioObjective::EnergyEfficiency => q / self.powers[i],
                }
            })
            .collect();
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(EnvError::NonFinite("radio rewards"));
        }
        for i in 0..n {
            self.alpha[i] = self.cfg.alpha.step(self.alpha[i], rng);
            self.beta[i] = self.cfg.beta.step(self.beta[i], rng);
            self.gain[i] = self.cfg.gain.step(self.gain[i], rng);
        }
        Ok(rewards)
    }
}

/// `R_(i,j) = U_i / |N_i|` with `U = A D⁻¹ R`, where `|N_i|` counts the
/// edge-agents leaving `i` (its self-edge included).
pub fn edge_rewards(comm: &InfluenceGraph, edges: &EdgeGraph, node_rewards: &[f64]) -> Result<Vec<f64>, EnvError> {
    let u = comm.smooth(node_rewards).map_err(|e| EnvError::Config(e.to_string()))?;
    Ok(edges
        .agent_edges
        .iter()
        .map(|&(i, _)| u[i] / comm.out_degree(i) as f64)
        .collect())
}

/// Edge-GMDP over a radio network. Transmit powers follow their own random
/// walk; agents only decide which messages to pass.
#[derive(Debug, Clone)]
pub struct EdgeRadio {
    radio: Radio,
    comm: Arc<InfluenceGraph>,
    edges: EdgeGraph,
    agents: Arc<Vec<(usize, usize)>>,
    graph: InfluenceGraph,
    y: Vec<f64>,
    last_node_rewards: Vec<f64>,
}

impl EdgeRadio {
    pub fn new(radio: Radio) -> Self {
        let comm = radio.graph().clone();
        let edges = edge_transform_with_self_edges(&comm);
        let graph = edges.influence_graph();
        let n = comm.n();
        Self {
            agents: Arc::new(edges.agent_edges.clone()),
            comm: Arc::new(comm),
            edges,
            graph,
            y: vec![radio.config().power.min; n],
            last_node_rewards: vec![0.0; n],
            radio,
        }
    }

    pub fn radio(&self) -> &Radio {
        &self.radio
    }

    pub fn edges(&self) -> &EdgeGraph {
        &self.edges
    }

    pub fn comm_graph(&self) -> &InfluenceGraph {
        &self.comm
    }

    /// Node rewards of the last step.
    pub fn node_rewards(&self) -> &[f64] {
        &self.last_node_rewards
    }

    pub fn transmit_powers(&self) -> &[f64] {
        &self.y
    }
}

impl GmdpEnvironment for EdgeRadio {
    fn graph(&self) -> &InfluenceGraph {
        &self.graph
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Bits(1)
    }

    fn reset(&mut self, rng: &mut SimRng) {
        self.radio.reset(rng);
        let walk = self.radio.config().power;
        for y in &mut self.y {
            *y = walk.initial(rng);
        }
        self.last_node_rewards.fill(0.0);
    }

    fn observe(&self) -> Observation {
        let nodes = self.radio.observe_nodes();
        let mut f = Array2::zeros((self.agents.len(), RADIO_EDGE_DIM));
        for (a, &(i, j)) in self.agents.iter().enumerate() {
            for k in 0..RADIO_NODE_DIM {
                f[[a, k]] = nodes[[i, k]];
                f[[a, RADIO_NODE_DIM + k]] = nodes[[j, k]];
            }
            f[[a, 2 * RADIO_NODE_DIM]] = if i == j { 1.0 } else { 0.0 };
        }
        Observation {
            features: f,
            choices: None,
            comm: Some(CommView {
                graph: self.comm.clone(),
                node_features: nodes,
                agent_edges: self.agents.clone(),
            }),
        }
    }

    fn step(&mut self, action: &JointAction, rng: &mut SimRng) -> Result<StepOutcome, EnvError> {
        let JointAction::Bits { bits: 1, values } = action else {
            return Err(EnvError::WrongActionKind);
        };
        if values.len() != self.agents.len() {
            return Err(EnvError::InvalidAction {
                agent: values.len(),
                reason: format!("expected {} edge decisions", self.agents.len()),
            });
        }
        let mut messages = vec![0usize; self.comm.n()];
        for (&(i, j), &pass) in self.agents.iter().zip(values) {
            if pass && i != j {
                messages[i] += 1;
            }
        }
        let node = self.radio.node_step(&self.y, &messages, rng)?;
        let rewards = edge_rewards(&self.comm, &self.edges, &node)?;
        let walk = self.radio.config().power;
        for y in &mut self.y {
            *y = walk.step(*y, rng);
        }
        self.last_node_rewards = node;
        Ok(StepOutcome::from_rewards(rewards, messages.iter().sum()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GeneratorSpec};
    use crate::rng::seeded;

    #[test]
    fn normalisation_examples() {
        assert_eq!(bgrw_normalise(1.5, 1.0, 2.0).unwrap(), 0.0);
        let lo = bgrw_normalise(1.0, 1.0, 2.0).unwrap();
        assert!((lo + 1.0 / (4.0 * 3f64.sqrt())).abs() < 1e-15);
        assert!((lo + 0.14434).abs() < 1e-5);
        assert!(bgrw_normalise(1.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn zero_sigma_walk_stands_still() {
        let mut rng = seeded(0);
        assert_eq!(bgrw_step(0.3, 0.0, 1.0, 0.0, &mut rng).unwrap(), 0.3);
    }

    #[test]
    fn walks_stay_in_bounds() {
        let w = Bgrw::new(-1.0, 1.0, 0.7).unwrap();
        let mut rng = seeded(4);
        let mut x = w.initial(&mut rng);
        for _ in 0..100_000 {
            x = w.step(x, &mut rng);
            assert!((-1.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn quality_limits() {
        assert_eq!(quality(1.0, 1.0, 0.0), 0.0);
        assert!((quality(1.0, 1.0, 60.0) - 1.0).abs() < 1e-12);
        assert!(quality(1.0, 1.0, 5.0) < 1.0);
    }

    #[test]
    fn isolated_node() {
        let g = InfluenceGraph::with_self_loops(1, &[]).unwrap();
        let cfg = RadioConfig {
            noise: 1.0,
            ..RadioConfig::default()
        };
        let mut radio = Radio::new(&g, ChannelGains { gains: vec![vec![]] }, cfg).unwrap();
        radio.set_user_parameters(&[1.0], &[0.5], &[1.0]);
        let r = radio.node_step(&[1.0], &[0], &mut seeded(0)).unwrap();
        assert_eq!(radio.interference(), &[1.0]);
        assert!((r[0] - quality(1.0, 0.5, 1.0)).abs() < 1e-15);
        let zero = radio.node_step(&[0.0], &[0], &mut seeded(0)).unwrap();
        assert_eq!(zero, vec![0.0]);
    }

    #[test]
    fn single_node_edge_reward_is_the_node_reward() {
        let g = InfluenceGraph::with_self_loops(1, &[]).unwrap();
        let eg = edge_transform_with_self_edges(&g);
        assert_eq!(eg.agent_edges, vec![(0, 0)]);
        assert_eq!(edge_rewards(&g, &eg, &[0.7]).unwrap(), vec![0.7]);
    }

    #[test]
    fn uniform_rewards_smooth_by_in_degree() {
        // Path 0 - 1 - 2: in-degrees 2, 3, 2.
        let g = InfluenceGraph::undirected(3, &[(0, 1), (1, 2)]).unwrap();
        let eg = edge_transform_with_self_edges(&g);
        let r = edge_rewards(&g, &eg, &[1.0; 3]).unwrap();
        let u = [0.5 + 1.0 / 3.0, 0.5 + 1.0 / 3.0 + 0.5, 1.0 / 3.0 + 0.5];
        for (k, &(i, _)) in eg.agent_edges.iter().enumerate() {
            assert!((r[k] - u[i] / g.out_degree(i) as f64).abs() < 1e-15);
        }
        assert!((r.iter().sum::<f64>() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn edge_gmdp_conserves_reward_and_bounds() {
        let spec = GeneratorSpec::Geometric {
            n_min: 10,
            n_max: 20,
            threshold: 0.25,
        };
        for seed in 0..10 {
            let g = generate(&spec, seed).unwrap();
            for objective in [RadioObjective::ServiceQuality, RadioObjective::EnergyEfficiency] {
                let cfg = RadioConfig {
                    objective,
                    ..RadioConfig::default()
                };
                let mut env = EdgeRadio::new(Radio::from_generated(&g, cfg).unwrap());
                let mut rng = seeded(seed);
                env.reset(&mut rng);
                for _ in 0..5 {
                    let values = (0..env.agents()).map(|_| rng.random_bool(0.5)).collect();
                    let out = env.step(&JointAction::Bits { bits: 1, values }, &mut rng).unwrap();
                    let nodes = env.node_rewards();
                    assert!((out.rewards.iter().sum::<f64>() - nodes.iter().sum::<f64>()).abs() < 1e-10);
                    assert!(env.radio().powers().iter().all(|&p| p >= cfg.base_power));
                    for (i, r) in nodes.iter().enumerate() {
                        let q_bound = match objective {
                            RadioObjective::ServiceQuality => 1.0,
                            RadioObjective::EnergyEfficiency => 1.0 / cfg.base_power,
                        };
                        assert!((0.0..q_bound).contains(r), "node {i}: {r}");
                    }
                }
            }
        }
    }
}
