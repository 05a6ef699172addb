//! Benchmark environments: firefighting, vector graph colouring and
//! transmit power control through its edge-GMDP.

pub mod colour;
pub mod firefight;
pub mod radio;

use serde::{Deserialize, Serialize};

use crate::approx::{ActorConfig, ActorHead, CriticConfig, GateMode};
use crate::gmdp::{EnvError, GmdpEnvironment};
use crate::graph::{generate, GeneratorSpec};

pub use colour::{brute_force_optimum, colour_reward, greedy_colour_step, Colouring, ColouringConfig};
pub use firefight::{firefight_rewards, FirefightConfig, Firefighting};
pub use radio::{
    bgrw_normalise, bgrw_step, capacity, edge_rewards, quality, Bgrw, EdgeRadio, Radio, RadioConfig, RadioObjective,
};

/// A buildable environment family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Firefighting {
        firefighters: usize,
        homes: usize,
        edge_prob: f64,
        /// Build every instance on the graph of this seed instead of a fresh one.
        #[serde(default)]
        instance_seed: Option<u64>,
        #[serde(default)]
        config: FirefightConfig,
    },
    Colouring {
        graph: GeneratorSpec,
        #[serde(default = "default_colours")]
        colours: usize,
        p_m: f64,
    },
    Radio {
        graph: GeneratorSpec,
        #[serde(default)]
        config: RadioConfig,
    },
}

fn default_colours() -> usize {
    3
}

fn graph_error(e: crate::graph::GraphError) -> EnvError {
    EnvError::Config(e.to_string())
}

impl EnvSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::Firefighting { .. } => "firefighting",
            EnvSpec::Colouring { .. } => "colouring",
            EnvSpec::Radio { .. } => "radio",
        }
    }

    /// One instance whose random graph is drawn from `seed`.
    pub fn build(&self, seed: u64) -> Result<Box<dyn GmdpEnvironment>, EnvError> {
        match self {
            EnvSpec::Firefighting {
                firefighters,
                homes,
                edge_prob,
                instance_seed,
                config,
            } => {
                let spec = GeneratorSpec::BipartiteFirefight {
                    firefighters: *firefighters,
                    homes: *homes,
                    edge_prob: *edge_prob,
                };
                let g = generate(&spec, instance_seed.unwrap_or(seed)).map_err(graph_error)?;
                let bip = g.bipartite.expect("bipartite generator");
                Ok(Box::new(Firefighting::new(bip, *config)?))
            }
            EnvSpec::Colouring { graph, colours, p_m } => {
                let g = generate(graph, seed).map_err(graph_error)?;
                let cfg = ColouringConfig {
                    colours: *colours,
                    p_m: *p_m,
                };
                Ok(Box::new(Colouring::new(&g.graph, cfg)?))
            }
            EnvSpec::Radio { graph, config } => {
                let g = generate(graph, seed).map_err(graph_error)?;
                Ok(Box::new(EdgeRadio::new(Radio::from_generated(&g, *config)?)))
            }
        }
    }

    /// Per-agent observation width, which is also the critic input width.
    pub fn obs_dim(&self) -> usize {
        match self {
            EnvSpec::Firefighting { .. } => firefight::FIREFIGHT_OBS_DIM,
            EnvSpec::Colouring { colours, .. } => 2 + colours,
            EnvSpec::Radio { .. } => radio::RADIO_EDGE_DIM,
        }
    }

    /// Actor layout for this family with the given widths.
    pub fn actor_config(&self, memory_dim: usize, edge_dim: usize, hidden: usize) -> ActorConfig {
        match self {
            EnvSpec::Firefighting { .. } => ActorConfig {
                head: ActorHead::Choice {
                    candidate_dim: firefight::FIREFIGHT_CANDIDATE_DIM,
                },
                gate: GateMode::Full,
                obs_dim: self.obs_dim(),
                memory_dim,
                edge_dim: 0,
                hidden,
            },
            EnvSpec::Colouring { colours, .. } => ActorConfig {
                head: ActorHead::Bits { bits: *colours },
                gate: GateMode::Full,
                obs_dim: self.obs_dim(),
                memory_dim,
                edge_dim: 0,
                hidden,
            },
            EnvSpec::Radio { .. } => ActorConfig {
                head: ActorHead::EdgeGates,
                gate: GateMode::Learned,
                obs_dim: radio::RADIO_NODE_DIM,
                memory_dim,
                edge_dim: edge_dim.max(1),
                hidden,
            },
        }
    }

    pub fn critic_config(&self, hidden: usize, layers: usize, pooled: bool) -> CriticConfig {
        CriticConfig {
            obs_dim: self.obs_dim(),
            hidden,
            layers,
            pooled,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::LdGnnActor;
    use crate::rng::seeded;

    fn specs() -> Vec<EnvSpec> {
        vec![
            EnvSpec::Firefighting {
                firefighters: 6,
                homes: 10,
                edge_prob: 0.4,
                instance_seed: Some(3),
                config: FirefightConfig::default(),
            },
            EnvSpec::Colouring {
                graph: GeneratorSpec::ErdosRenyi { n: 12, mean_degree: 3.0 },
                colours: 3,
                p_m: 0.4,
            },
            EnvSpec::Radio {
                graph: GeneratorSpec::Geometric {
                    n_min: 8,
                    n_max: 12,
                    threshold: 0.3,
                },
                config: RadioConfig::default(),
            },
        ]
    }

    #[test]
    fn every_family_runs_under_its_actor() {
        for spec in specs() {
            let actor = LdGnnActor::new(spec.actor_config(8, 4, 8), 1).unwrap();
            let mut env = spec.build(5).unwrap();
            let mut rng = seeded(2);
            env.reset(&mut rng);
            let obs = env.observe();
            assert_eq!(obs.features.ncols(), spec.obs_dim(), "{}", spec.name());
            let graph = env.graph().clone();
            let mut state = actor.initial_state(&obs, &graph).unwrap();
            for _ in 0..3 {
                let obs = env.observe();
                let trace = actor.step(&obs, &graph, &state, &mut rng).unwrap();
                let out = env.step(&trace.decision.action, &mut rng).unwrap();
                assert_eq!(out.rewards.len(), env.agents());
                assert_eq!(trace.log_probs.len(), env.agents());
                state = trace.next_state;
            }
        }
    }

    #[test]
    fn fixed_instance_ignores_the_seed() {
        let spec = &specs()[0];
        let a = spec.build(1).unwrap();
        let b = spec.build(2).unwrap();
        assert_eq!(a.graph(), b.graph());
    }

    #[test]
    fn specs_round_trip_through_json() {
        for spec in specs() {
            let text = serde_json::to_string(&spec).unwrap();
            let back: EnvSpec = serde_json::from_str(&text).unwrap();
            assert_eq!(back, spec);
        }
    }
}
