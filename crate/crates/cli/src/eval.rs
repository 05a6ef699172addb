//! Policy evaluation over fresh environment instances.

use std::io::Write;

use dvf_core::approx::{ActorPolicy, LdGnnActor};
use dvf_core::envs::EnvSpec;
use dvf_core::gmdp::{JointPolicy, UniformPolicy};
use dvf_core::rng::{derive_seed, stream};
use serde::{Deserialize, Serialize};

use crate::summary::Stats;
use crate::CliError;

#[derive(Debug, Clone, Copy)]
pub enum EvalPolicy<'a> {
    Actor(&'a LdGnnActor),
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub env: String,
    pub episodes: usize,
    pub steps: usize,
    /// Mean global reward per step, over all episodes.
    pub mean_reward: f64,
    /// Spread of the per-episode mean rewards.
    pub reward: Stats,
    /// Firefighting only: mean fire level per home and step.
    pub mean_fire_level: Option<f64>,
    pub fire_level: Option<Stats>,
    /// Messages reported by the environment, per step.
    pub mean_messages: f64,
}

/// One step of an evaluation episode, for JSON-lines traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub episode: usize,
    pub step: usize,
    pub reward: f64,
    pub messages: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fire_level: Option<f64>,
}

struct Episode {
    rewards: Vec<f64>,
    fires: Vec<f64>,
    messages: Vec<usize>,
}

fn homes(env: &EnvSpec) -> Option<usize> {
    match env {
        EnvSpec::Firefighting { homes, .. } => Some(*homes),
        _ => None,
    }
}

fn run_episode(policy: EvalPolicy<'_>, env: &EnvSpec, steps: usize, seed: u64, e: usize) -> Result<Episode, CliError> {
    let mut instance = env.build(derive_seed(seed, "eval.env", e as u64))?;
    let mut rng = stream(seed, "eval.step", e as u64);
    instance.reset(&mut rng);
    let graph = instance.graph().clone();
    let mut actor_policy;
    let mut uniform = UniformPolicy;
    let policy: &mut dyn JointPolicy = match policy {
        EvalPolicy::Actor(actor) => {
            actor_policy = ActorPolicy::new(actor, graph);
            &mut actor_policy
        }
        EvalPolicy::Uniform => &mut uniform,
    };
    let space = instance.action_space();
    let homes = homes(env);
    let mut out = Episode {
        rewards: Vec::with_capacity(steps),
        fires: Vec::new(),
        messages: Vec::with_capacity(steps),
    };
    let mut obs = instance.observe();
    for _ in 0..steps {
        let decision = policy.act(&obs, space, &mut rng)?;
        let step = instance.step(&decision.action, &mut rng)?;
        out.rewards.push(step.global_reward);
        out.messages.push(step.messages);
        if let Some(h) = homes {
            out.fires.push(-step.rewards.iter().sum::<f64>() / h as f64);
        }
        if step.done {
            break;
        }
        obs = instance.observe();
    }
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Evaluate `policy` on `episodes` fresh instances of `env`, each run for
/// `steps` steps. Deterministic in `seed`. When `trace` is given, every step
/// is written to it as one JSON line.
pub fn evaluate(
    policy: EvalPolicy<'_>,
    env: &EnvSpec,
    episodes: usize,
    steps: usize,
    seed: u64,
    trace: Option<&mut dyn Write>,
) -> Result<EvalSummary, CliError> {
    if episodes == 0 || steps == 0 {
        return Err(CliError::Usage("evaluation needs at least one episode and one step".into()));
    }
    let runs: Vec<Episode> = (0..episodes)
        .map(|e| run_episode(policy, env, steps, seed, e))
        .collect::<Result<_, _>>()?;
    if let Some(w) = trace {
        for (e, ep) in runs.iter().enumerate() {
            for (t, (&reward, &messages)) in ep.rewards.iter().zip(&ep.messages).enumerate() {
                let line = StepTrace {
                    episode: e,
                    step: t,
                    reward,
                    messages,
                    fire_level: ep.fires.get(t).copied(),
                };
                let text = serde_json::to_string(&line).expect("serialisable");
                writeln!(w, "{text}").map_err(|e| CliError::Io(e.to_string()))?;
            }
        }
    }
    let all: Vec<f64> = runs.iter().flat_map(|r| r.rewards.iter().copied()).collect();
    let per_episode: Vec<f64> = runs.iter().map(|r| mean(&r.rewards)).collect();
    let fires: Vec<f64> = runs.iter().flat_map(|r| r.fires.iter().copied()).collect();
    let fire_episodes: Vec<f64> = runs.iter().filter(|r| !r.fires.is_empty()).map(|r| mean(&r.fires)).collect();
    let messages: Vec<f64> = runs.iter().flat_map(|r| r.messages.iter().map(|&m| m as f64)).collect();
    Ok(EvalSummary {
        env: env.name().into(),
        episodes,
        steps,
        mean_reward: mean(&all),
        reward: Stats::of(&per_episode).expect("episodes > 0"),
        mean_fire_level: (!fires.is_empty()).then(|| mean(&fires)),
        fire_level: Stats::of(&fire_episodes),
        mean_messages: mean(&messages),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use dvf_core::gmdp::rollout;
    use dvf_core::graph::GeneratorSpec;

    fn colouring() -> EnvSpec {
        EnvSpec::Colouring {
            graph: GeneratorSpec::ErdosRenyi { n: 12, mean_degree: 3.0 },
            colours: 3,
            p_m: 0.4,
        }
    }

    #[test]
    fn uniform_eval_matches_rollouts() {
        let env = colouring();
        let s = evaluate(EvalPolicy::Uniform, &env, 4, 6, 11, None).unwrap();
        let mut total = 0.0;
        for e in 0..4u64 {
            let mut instance = env.build(derive_seed(11, "eval.env", e)).unwrap();
            let mut rng = stream(11, "eval.step", e);
            instance.reset(&mut rng);
            let tr = rollout(&mut *instance, &mut UniformPolicy, 6, &mut rng).unwrap();
            total += tr.iter().map(|t| t.rewards.iter().sum::<f64>() / t.rewards.len() as f64).sum::<f64>();
        }
        assert!((s.mean_reward - total / 24.0).abs() < 1e-12);
        assert!(s.mean_fire_level.is_none());
    }

    #[test]
    fn zero_episodes_rejected() {
        assert!(evaluate(EvalPolicy::Uniform, &colouring(), 0, 5, 0, None).is_err());
    }

    #[test]
    fn firefighting_reports_fire_and_traces() {
        let env = EnvSpec::Firefighting {
            firefighters: 4,
            homes: 6,
            edge_prob: 0.5,
            instance_seed: Some(1),
            config: Default::default(),
        };
        let mut buf = Vec::new();
        let s = evaluate(EvalPolicy::Uniform, &env, 2, 3, 5, Some(&mut buf)).unwrap();
        let fire = s.mean_fire_level.unwrap();
        assert!((0.0..=5.0).contains(&fire));
        // Global reward is the firefighter mean of Σ_h −f_h spread over homes.
        assert!((s.mean_reward + fire * 6.0 / 4.0).abs() < 1e-9);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        let first: StepTrace = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!((first.episode, first.step), (0, 0));
    }
}
