//! Vector graph colouring: every node outputs a binary colour vector and is
//! rewarded for colours its neighbours do not use.
//!
//! Observation layout, per node: the random number `O_i ~ U(0, 1)` drawn at
//! reset, `1 / (1 + deg_i)`, and the node's previous colour bits.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gmdp::{ActionSpace, EnvError, GmdpEnvironment, JointAction, Observation, StepOutcome};
use crate::graph::InfluenceGraph;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColouringConfig {
    pub colours: usize,
    /// Conflict penalty.
    pub p_m: f64,
}

impl Default for ColouringConfig {
    fn default() -> Self {
        Self { colours: 3, p_m: 0.4 }
    }
}

impl ColouringConfig {
    pub fn obs_dim(&self) -> usize {
        2 + self.colours
    }
}

/// `R_i = ⟨Y_i, Y_i⟩ − p_m Σ_{j∈N_i} ⟨Y_i, Y_j⟩` with `y` row-major `n × c`.
pub fn colour_reward(y: &[bool], colours: usize, neighbours: &[Vec<usize>], p_m: f64) -> Vec<f64> {
    let row = |i: usize| &y[i * colours..(i + 1) * colours];
    let dot = |a: &[bool], b: &[bool]| a.iter().zip(b).filter(|(x, y)| **x && **y).count() as f64;
    (0..neighbours.len())
        .map(|i| {
            let yi = row(i);
            let conflicts: f64 = neighbours[i].iter().map(|&j| dot(yi, row(j))).sum();
            dot(yi, yi) - p_m * conflicts
        })
        .collect()
}

/// One round of the greedy threshold rule for a single colour: each node is
/// active with probability 1/2 and an active node takes the colour iff
/// `2 p_m Σ_{j∈N_i} Y_j < 1` on the previous round.
pub fn greedy_colour_step(y_prev: &[bool], neighbours: &[Vec<usize>], p_m: f64, rng: &mut SimRng) -> Vec<bool> {
    (0..y_prev.len())
        .map(|i| {
            let active = rng.random_bool(0.5);
            if !active {
                return y_prev[i];
            }
            let load = neighbours[i].iter().filter(|&&j| y_prev[j]).count() as f64;
            2.0 * p_m * load < 1.0
        })
        .collect()
}

/// Best mean reward over all colourings, by enumeration. The reward
/// separates over colours, so one colour is enumerated and scaled by `c`.
pub fn brute_force_optimum(neighbours: &[Vec<usize>], colours: usize, p_m: f64) -> f64 {
    let n = neighbours.len();
    assert!(n <= 20, "enumeration is limited to 20 nodes");
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << n) {
        let y: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let total: f64 = colour_reward(&y, 1, neighbours, p_m).iter().sum();
        best = best.max(total);
    }
    colours as f64 * best / n as f64
}

#[derive(Debug, Clone)]
pub struct Colouring {
    graph: InfluenceGraph,
    neighbours: Vec<Vec<usize>>,
    cfg: ColouringConfig,
    noise: Vec<f64>,
    y: Vec<bool>,
}

impl Colouring {
    /// `graph` is the communication graph; it is symmetrised.
    pub fn new(graph: &InfluenceGraph, cfg: ColouringConfig) -> Result<Self, EnvError> {
        if cfg.colours == 0 {
            return Err(EnvError::Config("at least one colour is required".into()));
        }
        if !(cfg.p_m.is_finite() && cfg.p_m >= 0.0) {
            return Err(EnvError::Config("p_m must be finite and non-negative".into()));
        }
        let graph = graph.symmetrised();
        let neighbours: Vec<Vec<usize>> = (0..graph.n()).map(|i| graph.undirected_neighbours(i)).collect();
        let n = graph.n();
        Ok(Self {
            graph,
            neighbours,
            cfg,
            noise: vec![0.0; n],
            y: vec![false; n * cfg.colours],
        })
    }

    pub fn config(&self) -> &ColouringConfig {
        &self.cfg
    }

    pub fn neighbours(&self) -> &[Vec<usize>] {
        &self.neighbours
    }

    pub fn colours(&self) -> &[bool] {
        &self.y
    }
}

impl GmdpEnvironment for Colouring {
    fn graph(&self) -> &InfluenceGraph {
        &self.graph
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Bits(self.cfg.colours)
    }

    fn reset(&mut self, rng: &mut SimRng) {
        for o in &mut self.noise {
            *o = rng.random();
        }
        self.y.fill(false);
    }

    fn observe(&self) -> Observation {
        let c = self.cfg.colours;
        let mut f = Array2::zeros((self.noise.len(), self.cfg.obs_dim()));
        for (i, o) in self.noise.iter().enumerate() {
            f[[i, 0]] = *o;
            f[[i, 1]] = 1.0 / (1 + self.neighbours[i].len()) as f64;
            for k in 0..c {
                f[[i, 2 + k]] = if self.y[i * c + k] { 1.0 } else { 0.0 };
            }
        }
        Observation::plain(f)
    }

    fn step(&mut self, action: &JointAction, _: &mut SimRng) -> Result<StepOutcome, EnvError> {
        let JointAction::Bits { bits, values } = action else {
            return Err(EnvError::WrongActionKind);
        };
        if *bits != self.cfg.colours || values.len() != self.y.len() {
            return Err(EnvError::InvalidAction {
                agent: 0,
                reason: format!("expected {} colour bits per node", self.cfg.colours),
            });
        }
        self.y.copy_from_slice(values);
        let rewards = colour_reward(&self.y, self.cfg.colours, &self.neighbours, self.cfg.p_m);
        // Messages are free here and always sent along every edge.
        let messages = self.neighbours.iter().map(Vec::len).sum();
        Ok(StepOutcome::from_rewards(rewards, messages))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn reward_examples() {
        assert_eq!(colour_reward(&[true; 3], 3, &[vec![]], 0.5), vec![3.0]);
        let pair = [vec![1], vec![0]];
        assert_eq!(colour_reward(&[true, false, true, false], 2, &pair, 0.5), vec![0.5, 0.5]);
        assert_eq!(colour_reward(&[false; 4], 2, &pair, 0.5), vec![0.0, 0.0]);
    }

    #[test]
    fn greedy_rule() {
        let pair = [vec![1], vec![0]];
        for seed in 0..16 {
            // Node 0 sees one coloured neighbour (2·1·1 ≥ 1) and node 1 none,
            // so the outcome is the same whether or not they are active.
            let y = greedy_colour_step(&[false, true], &pair, 1.0, &mut seeded(seed));
            assert_eq!(y, vec![false, true]);
        }
        let y = greedy_colour_step(&[false, false], &pair, 0.1, &mut seeded(0));
        let mut probe = seeded(0);
        for (i, taken) in y.into_iter().enumerate() {
            assert_eq!(taken, probe.random_bool(0.5), "node {i}");
        }
    }

    #[test]
    fn greedy_inactive_keeps_colour() {
        let pair = [vec![1], vec![0]];
        let mut rng = seeded(1);
        let mut probe = rng.clone();
        let active: Vec<bool> = (0..2).map(|_| probe.random_bool(0.5)).collect();
        let y = greedy_colour_step(&[true, true], &pair, 1.0, &mut rng);
        for i in 0..2 {
            assert_eq!(y[i], !active[i]);
        }
    }

    #[test]
    fn brute_force_small_cases() {
        assert_eq!(brute_force_optimum(&[vec![]], 3, 0.4), 3.0);
        // Two adjacent nodes: both on gives 2 − 0.8 = 1.2 per colour.
        assert!((brute_force_optimum(&[vec![1], vec![0]], 1, 0.4) - 0.6).abs() < 1e-12);
        assert!((brute_force_optimum(&[vec![1], vec![0]], 1, 0.6) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn env_reports_mean_reward() {
        let g = InfluenceGraph::undirected(3, &[(0, 1), (1, 2)]).unwrap();
        let mut env = Colouring::new(&g, ColouringConfig::default()).unwrap();
        let mut rng = seeded(0);
        env.reset(&mut rng);
        let values = vec![true, false, false, true, true, false, false, false, true];
        let out = env
            .step(&JointAction::Bits { bits: 3, values: values.clone() }, &mut rng)
            .unwrap();
        let expected = colour_reward(&values, 3, env.neighbours(), 0.4);
        assert_eq!(out.rewards, expected);
        assert!((out.global_reward - expected.iter().sum::<f64>() / 3.0).abs() < 1e-15);
        let obs = env.observe();
        assert_eq!(obs.features.dim(), (3, 5));
        assert_eq!(obs.features[[1, 1]], 1.0 / 3.0);
        assert_eq!(obs.features[[1, 2]], 1.0);
        assert_eq!(obs.features[[1, 3]], 1.0);
        assert_eq!(obs.features[[1, 4]], 0.0);
    }
}
