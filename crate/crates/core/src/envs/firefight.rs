//! Firefighters on a bipartite firefighter-home graph.
//!
//! Each step every firefighter moves to one of its homes. A home visited by
//! one firefighter loses one fire level, a home visited by two or more is
//! extinguished. Fire then spreads: a home with a burning neighbour gains a
//! level with probability 0.8, otherwise a burning home gains a level with
//! probability 0.4. Rewards are computed on the post-spread levels.
//!
//! Observation layout, per firefighter: mean and max fire level of its homes
//! (scaled by `f_max`), fraction of its homes burning, `1 / |N_i|`. Each
//! candidate home carries: its level over `f_max`, `1 / |N_h|`, fraction of
//! adjacent homes burning, and a burning flag.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gmdp::{ActionSpace, ChoiceSet, EnvError, GmdpEnvironment, JointAction, Observation, StepOutcome};
use crate::graph::Bipartite;
use crate::graph::InfluenceGraph;
use crate::rng::SimRng;

pub const FIREFIGHT_OBS_DIM: usize = 4;
pub const FIREFIGHT_CANDIDATE_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirefightConfig {
    pub f_max: u32,
    /// Growth probability when an adjacent home burns.
    pub spread_neighbour: f64,
    /// Growth probability of a burning home with no burning neighbour.
    pub spread_self: f64,
}

impl Default for FirefightConfig {
    fn default() -> Self {
        Self {
            f_max: 5,
            spread_neighbour: 0.8,
            spread_self: 0.4,
        }
    }
}

/// `R_i = Σ_{h∈N_i} −f_h / |N_h|`; the rewards sum to `Σ_h −f_h`.
pub fn firefight_rewards(bip: &Bipartite, levels: &[u32]) -> Vec<f64> {
    bip.firefighter_homes
        .iter()
        .map(|homes| {
            homes
                .iter()
                .map(|&h| -(levels[h] as f64) / bip.home_firefighters[h].len() as f64)
                .sum()
        })
        .collect()
}

/// Apply the firefighters' moves: one visitor lowers the level by one, two
/// or more put the fire out.
pub fn suppress(levels: &mut [u32], homes: &[usize]) {
    let mut visits = vec![0usize; levels.len()];
    for &h in homes {
        visits[h] += 1;
    }
    for (f, v) in levels.iter_mut().zip(visits) {
        match v {
            0 => {}
            1 => *f = f.saturating_sub(1),
            _ => *f = 0,
        }
    }
}

/// Stochastic spread with one uniform draw per home, in home order.
pub fn spread(levels: &mut [u32], adjacency: &[Vec<usize>], cfg: &FirefightConfig, rng: &mut SimRng) {
    let burning: Vec<bool> = levels.iter().map(|&f| f > 0).collect();
    for (h, f) in levels.iter_mut().enumerate() {
        let u: f64 = rng.random();
        let p = if adjacency[h].iter().any(|&g| burning[g]) {
            cfg.spread_neighbour
        } else if burning[h] {
            cfg.spread_self
        } else {
            0.0
        };
        if u < p {
            *f = (*f + 1).min(cfg.f_max);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Firefighting {
    bip: Bipartite,
    graph: InfluenceGraph,
    adjacency: Vec<Vec<usize>>,
    levels: Vec<u32>,
    cfg: FirefightConfig,
}

impl Firefighting {
    pub fn new(bip: Bipartite, cfg: FirefightConfig) -> Result<Self, EnvError> {
        if cfg.f_max == 0 {
            return Err(EnvError::Config("f_max must be positive".into()));
        }
        for p in [cfg.spread_neighbour, cfg.spread_self] {
            if !(0.0..=1.0).contains(&p) {
                return Err(EnvError::Config("spread probabilities must lie in [0, 1]".into()));
            }
        }
        if bip.firefighter_homes.iter().any(|h| h.is_empty()) || bip.home_firefighters.iter().any(|f| f.is_empty()) {
            return Err(EnvError::Config("every firefighter and home needs a neighbour".into()));
        }
        let graph = bip.influence_graph();
        let adjacency = bip.home_adjacency();
        let levels = vec![0; bip.homes()];
        Ok(Self {
            bip,
            graph,
            adjacency,
            levels,
            cfg,
        })
    }

    pub fn bipartite(&self) -> &Bipartite {
        &self.bip
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn set_levels(&mut self, levels: &[u32]) -> Result<(), EnvError> {
        if levels.len() != self.levels.len() || levels.iter().any(|&f| f > self.cfg.f_max) {
            return Err(EnvError::Config("fire levels out of range".into()));
        }
        self.levels.copy_from_slice(levels);
        Ok(())
    }

    pub fn mean_fire_level(&self) -> f64 {
        self.levels.iter().map(|&f| f as f64).sum::<f64>() / self.levels.len() as f64
    }

    fn targets(&self, action: &JointAction) -> Result<Vec<usize>, EnvError> {
        let JointAction::Choice(picks) = action else {
            return Err(EnvError::WrongActionKind);
        };
        if picks.len() != self.bip.firefighters() {
            return Err(EnvError::InvalidAction {
                agent: picks.len(),
                reason: format!("expected {} firefighters", self.bip.firefighters()),
            });
        }
        picks
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                self.bip.firefighter_homes[i].get(k).copied().ok_or_else(|| EnvError::InvalidAction {
                    agent: i,
                    reason: format!("home index {k} not adjacent"),
                })
            })
            .collect()
    }
}

impl GmdpEnvironment for Firefighting {
    fn graph(&self) -> &InfluenceGraph {
        &self.graph
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Choice
    }

    fn reset(&mut self, rng: &mut SimRng) {
        for f in &mut self.levels {
            *f = rng.random_range(0..=self.cfg.f_max);
        }
    }

    fn observe(&self) -> Observation {
        let fmax = self.cfg.f_max as f64;
        let n = self.bip.firefighters();
        let burning_share: Vec<f64> = self
            .adjacency
            .iter()
            .map(|adj| {
                if adj.is_empty() {
                    0.0
                } else {
                    adj.iter().filter(|&&g| self.levels[g] > 0).count() as f64 / adj.len() as f64
                }
            })
            .collect();
        let mut features = Array2::zeros((n, FIREFIGHT_OBS_DIM));
        let mut offsets = Vec::with_capacity(n + 1);
        let mut rows = Vec::new();
        offsets.push(0);
        for (i, homes) in self.bip.firefighter_homes.iter().enumerate() {
            let lv: Vec<f64> = homes.iter().map(|&h| self.levels[h] as f64 / fmax).collect();
            let k = lv.len() as f64;
            features[[i, 0]] = lv.iter().sum::<f64>() / k;
            features[[i, 1]] = lv.iter().copied().fold(0.0, f64::max);
            features[[i, 2]] = lv.iter().filter(|&&v| v > 0.0).count() as f64 / k;
            features[[i, 3]] = 1.0 / k;
            for &h in homes {
                rows.push([
                    self.levels[h] as f64 / fmax,
                    1.0 / self.bip.home_firefighters[h].len() as f64,
                    burning_share[h],
                    if self.levels[h] > 0 { 1.0 } else { 0.0 },
                ]);
            }
            offsets.push(rows.len());
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Observation {
            features,
            choices: Some(ChoiceSet {
                offsets,
                features: Array2::from_shape_vec((rows.len(), FIREFIGHT_CANDIDATE_DIM), flat).expect("candidate rows"),
            }),
            comm: None,
        }
    }

    fn step(&mut self, action: &JointAction, rng: &mut SimRng) -> Result<StepOutcome, EnvError> {
        let homes = self.targets(action)?;
        suppress(&mut self.levels, &homes);
        spread(&mut self.levels, &self.adjacency, &self.cfg, rng);
        Ok(StepOutcome::from_rewards(firefight_rewards(&self.bip, &self.levels), 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn bip(firefighter_homes: Vec<Vec<usize>>, homes: usize) -> Bipartite {
        let mut home_firefighters = vec![Vec::new(); homes];
        for (f, hs) in firefighter_homes.iter().enumerate() {
            for &h in hs {
                home_firefighters[h].push(f);
            }
        }
        Bipartite {
            firefighter_homes,
            home_firefighters,
        }
    }

    #[test]
    fn one_visitor_lowers_two_extinguish() {
        let mut lv = vec![3, 5, 2];
        suppress(&mut lv, &[0, 1, 1]);
        assert_eq!(lv, vec![2, 0, 2]);
    }

    #[test]
    fn isolated_home_trace() {
        // Homes {0, 1} and {2, 3} form two separate neighbourhoods.
        let b = bip(vec![vec![0, 1], vec![2, 3]], 4);
        let mut env = Firefighting::new(b, FirefightConfig::default()).unwrap();
        env.set_levels(&[3, 0, 0, 0]).unwrap();
        let mut rng = seeded(5);
        let mut probe = rng.clone();
        env.step(&JointAction::Choice(vec![0, 0]), &mut rng).unwrap();
        // Home 0 drops to 2; it has no burning neighbour, so it regrows w.p. 0.4.
        let u0: f64 = probe.random();
        let expected = if u0 < 0.4 { 3 } else { 2 };
        assert_eq!(env.levels()[0], expected);
        // Home 1 is adjacent to burning home 0 and ignites w.p. 0.8.
        let u1: f64 = probe.random();
        assert_eq!(env.levels()[1], u32::from(u1 < 0.8));
    }

    #[test]
    fn no_fire_no_reward() {
        let b = bip(vec![vec![0, 1], vec![1, 2]], 3);
        let mut env = Firefighting::new(b, FirefightConfig::default()).unwrap();
        env.set_levels(&[0, 0, 0]).unwrap();
        let out = env.step(&JointAction::Choice(vec![1, 0]), &mut seeded(0)).unwrap();
        assert_eq!(out.rewards, vec![0.0, 0.0]);
        assert_eq!(env.levels(), &[0, 0, 0]);
    }

    #[test]
    fn reward_identity_and_bounds() {
        let b = bip(vec![vec![0, 1, 2], vec![2, 3], vec![3, 4, 0]], 5);
        let mut env = Firefighting::new(b.clone(), FirefightConfig::default()).unwrap();
        let mut rng = seeded(9);
        env.reset(&mut rng);
        for t in 0..50 {
            let out = env.step(&JointAction::Choice(vec![t % 3, t % 2, 0]), &mut rng).unwrap();
            let total: f64 = out.rewards.iter().sum();
            let fire: f64 = env.levels().iter().map(|&f| -(f as f64)).sum();
            assert!((total - fire).abs() < 1e-12);
            assert_eq!(out.rewards, firefight_rewards(&b, env.levels()));
            assert!(env.levels().iter().all(|&f| f <= 5));
        }
    }

    #[test]
    fn non_adjacent_home_is_rejected() {
        let b = bip(vec![vec![0, 1]], 2);
        let mut env = Firefighting::new(b, FirefightConfig::default()).unwrap();
        let err = env.step(&JointAction::Choice(vec![2]), &mut seeded(0));
        assert!(matches!(err, Err(EnvError::InvalidAction { agent: 0, .. })));
    }

    #[test]
    fn observation_shapes() {
        let b = bip(vec![vec![0, 1], vec![1, 2, 3]], 4);
        let mut env = Firefighting::new(b, FirefightConfig::default()).unwrap();
        env.set_levels(&[5, 0, 0, 1]).unwrap();
        let obs = env.observe();
        assert_eq!(obs.features.dim(), (2, FIREFIGHT_OBS_DIM));
        let c = obs.choices.unwrap();
        assert_eq!(c.offsets, vec![0, 2, 5]);
        assert_eq!(c.features[[0, 0]], 1.0);
        assert_eq!(obs.features[[1, 1]], 0.2);
    }
}
