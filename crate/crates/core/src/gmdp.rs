//! The environment and policy contracts shared by every GMDP in the crate.
//!
//! Observations are fixed-length real vectors per agent. Environments whose
//! agents choose among a variable set of targets (firefighting) attach a
//! [`ChoiceSet`]; environments whose agents are communication edges attach a
//! [`CommView`] describing the underlying node graph.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use thiserror::Error;

use crate::graph::InfluenceGraph;
use crate::rng::SimRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("agent {agent}: invalid action ({reason})")]
    InvalidAction { agent: usize, reason: String },
    #[error("action kind does not match the environment's action space")]
    WrongActionKind,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid environment configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpace {
    /// `k` independent binary outputs per agent.
    Bits(usize),
    /// One index into the agent's candidate list in [`Observation::choices`].
    Choice,
    /// Nothing to decide; the environment evolves on its own.
    Passive,
}

#[derive(Debug, Clone, PartialEq)]
pub enum JointAction {
    /// Row-major `agents × bits`.
    Bits { bits: usize, values: Vec<bool> },
    Choice(Vec<usize>),
    Passive,
}

impl JointAction {
    pub fn bits_of(&self, agent: usize) -> Option<&[bool]> {
        match self {
            JointAction::Bits { bits, values } => Some(&values[agent * bits..(agent + 1) * bits]),
            _ => None,
        }
    }
}

/// Candidate targets per agent, flattened: agent `i` owns rows
/// `offsets[i]..offsets[i + 1]` of `features`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceSet {
    pub offsets: Vec<usize>,
    pub features: Array2<f64>,
}

impl ChoiceSet {
    pub fn count(&self, agent: usize) -> usize {
        self.offsets[agent + 1] - self.offsets[agent]
    }
}

/// Node-level view for environments whose agents are communication edges.
#[derive(Debug, Clone, PartialEq)]
pub struct CommView {
    pub graph: Arc<InfluenceGraph>,
    pub node_features: Array2<f64>,
    /// `(tail, head)` of each agent.
    pub agent_edges: Arc<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// `agents × obs_dim`.
    pub features: Array2<f64>,
    pub choices: Option<ChoiceSet>,
    pub comm: Option<CommView>,
}

impl Observation {
    pub fn plain(features: Array2<f64>) -> Self {
        Self {
            features,
            choices: None,
            comm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Local rewards `R_i`, one per agent.
    pub rewards: Vec<f64>,
    /// `n⁻¹ Σ R_i`.
    pub global_reward: f64,
    /// Messages sent during the step.
    pub messages: usize,
    pub done: bool,
}

impl StepOutcome {
    pub fn from_rewards(rewards: Vec<f64>, messages: usize) -> Self {
        Self {
            global_reward: global_reward(&rewards),
            rewards,
            messages,
            done: false,
        }
    }
}

/// An environment whose rewards and transitions factorise over its
/// influence graph.
pub trait GmdpEnvironment: Send {
    fn graph(&self) -> &InfluenceGraph;

    fn agents(&self) -> usize {
        self.graph().n()
    }

    fn action_space(&self) -> ActionSpace;

    fn reset(&mut self, rng: &mut SimRng);

    fn observe(&self) -> Observation;

    fn step(&mut self, action: &JointAction, rng: &mut SimRng) -> Result<StepOutcome, EnvError>;
}

impl<E: GmdpEnvironment + ?Sized> GmdpEnvironment for Box<E> {
    fn graph(&self) -> &InfluenceGraph {
        (**self).graph()
    }
    fn action_space(&self) -> ActionSpace {
        (**self).action_space()
    }
    fn reset(&mut self, rng: &mut SimRng) {
        (**self).reset(rng)
    }
    fn observe(&self) -> Observation {
        (**self).observe()
    }
    fn step(&mut self, action: &JointAction, rng: &mut SimRng) -> Result<StepOutcome, EnvError> {
        (**self).step(action, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub action: JointAction,
    pub log_probs: Vec<f64>,
    pub entropies: Vec<f64>,
}

/// Maps per-agent observations to a joint action.
pub trait JointPolicy {
    fn act(
        &mut self,
        obs: &Observation,
        space: ActionSpace,
        rng: &mut SimRng,
    ) -> Result<PolicyOutput, EnvError>;
}

/// Every agent acts uniformly at random.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPolicy;

impl JointPolicy for UniformPolicy {
    fn act(&mut self, obs: &Observation, space: ActionSpace, rng: &mut SimRng) -> Result<PolicyOutput, EnvError> {
        let n = obs.features.nrows();
        Ok(match space {
            ActionSpace::Bits(k) => PolicyOutput {
                action: JointAction::Bits {
                    bits: k,
                    values: (0..n * k).map(|_| rng.random::<bool>()).collect(),
                },
                log_probs: vec![-(k as f64) * std::f64::consts::LN_2; n],
                entropies: vec![k as f64 * std::f64::consts::LN_2; n],
            },
            ActionSpace::Choice => {
                let choices = obs.choices.as_ref().ok_or(EnvError::WrongActionKind)?;
                let mut picks = Vec::with_capacity(n);
                let mut log_probs = Vec::with_capacity(n);
                for i in 0..n {
                    let k = choices.count(i);
                    if k == 0 {
                        return Err(EnvError::InvalidAction {
                            agent: i,
                            reason: "no candidates".into(),
                        });
                    }
                    picks.push(rng.random_range(0..k));
                    log_probs.push(-(k as f64).ln());
                }
                let entropies = log_probs.iter().map(|l| -l).collect();
                PolicyOutput {
                    action: JointAction::Choice(picks),
                    log_probs,
                    entropies,
                }
            }
            ActionSpace::Passive => PolicyOutput {
                action: JointAction::Passive,
                log_probs: vec![0.0; n],
                entropies: vec![0.0; n],
            },
        })
    }
}

/// Always plays the same joint action.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPolicy(pub JointAction);

impl JointPolicy for FixedPolicy {
    fn act(&mut self, obs: &Observation, _: ActionSpace, _: &mut SimRng) -> Result<PolicyOutput, EnvError> {
        let n = obs.features.nrows();
        Ok(PolicyOutput {
            action: self.0.clone(),
            log_probs: vec![0.0; n],
            entropies: vec![0.0; n],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: JointAction,
    pub rewards: Vec<f64>,
    pub next_obs: Observation,
    pub done: bool,
}

/// `n⁻¹ Σ_i R_i`.
pub fn global_reward(rewards: &[f64]) -> f64 {
    rewards.iter().sum::<f64>() / rewards.len() as f64
}

/// Run `steps` transitions from the environment's current state.
pub fn rollout<E, P>(env: &mut E, policy: &mut P, steps: usize, rng: &mut SimRng) -> Result<Vec<Transition>, EnvError>
where
    E: GmdpEnvironment + ?Sized,
    P: JointPolicy + ?Sized,
{
    let space = env.action_space();
    let mut obs = env.observe();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let decision = policy.act(&obs, space, rng)?;
        let outcome = env.step(&decision.action, rng)?;
        if outcome.rewards.iter().any(|r| !r.is_finite()) {
            return Err(EnvError::NonFinite("rewards"));
        }
        let next_obs = env.observe();
        out.push(Transition {
            obs: std::mem::replace(&mut obs, next_obs.clone()),
            action: decision.action,
            rewards: outcome.rewards,
            next_obs,
            done: outcome.done,
        });
        if outcome.done {
            break;
        }
    }
    Ok(out)
}

/// An explicitly enumerated Markov chain with per-state reward vectors,
/// exposed as a passive GMDP. Rewards at `t` are those of the state occupied
/// at `t`; the observation of every agent is the one-hot current state.
#[derive(Debug, Clone)]
pub struct MarkovChainEnv {
    graph: InfluenceGraph,
    transition: Array2<f64>,
    rewards: Array2<f64>,
    initial: Option<usize>,
    state: usize,
}

impl MarkovChainEnv {
    /// `transition` is `S × S` row-stochastic; `rewards` is `S × n`.
    /// With `initial = None` the start state is drawn uniformly on reset.
    pub fn new(
        graph: InfluenceGraph,
        transition: Array2<f64>,
        rewards: Array2<f64>,
        initial: Option<usize>,
    ) -> Result<Self, EnvError> {
        let s = transition.nrows();
        if transition.ncols() != s || rewards.nrows() != s || rewards.ncols() != graph.n() || s == 0 {
            return Err(EnvError::Config("chain dimensions disagree".into()));
        }
        for row in transition.rows() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (row.sum() - 1.0).abs() > 1e-9 {
                return Err(EnvError::Config("transition matrix is not row-stochastic".into()));
            }
        }
        if initial.is_some_and(|s0| s0 >= s) {
            return Err(EnvError::Config("initial state out of range".into()));
        }
        Ok(Self {
            graph,
            transition,
            rewards,
            initial,
            state: initial.unwrap_or(0),
        })
    }

    /// One state, constant reward `r` at every agent.
    pub fn constant(graph: InfluenceGraph, r: f64) -> Self {
        let n = graph.n();
        Self::new(graph, Array2::ones((1, 1)), Array2::from_elem((1, n), r), Some(0)).expect("valid")
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn set_state(&mut self, s: usize) {
        self.state = s;
    }

    pub fn states(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> &Array2<f64> {
        &self.transition
    }

    pub fn rewards(&self) -> &Array2<f64> {
        &self.rewards
    }
}

impl GmdpEnvironment for MarkovChainEnv {
    fn graph(&self) -> &InfluenceGraph {
        &self.graph
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Passive
    }

    fn reset(&mut self, rng: &mut SimRng) {
        self.state = match self.initial {
            Some(s) => s,
            None => rng.random_range(0..self.states()),
        };
    }

    fn observe(&self) -> Observation {
        let mut f = Array2::zeros((self.graph.n(), self.states()));
        f.column_mut(self.state).fill(1.0);
        Observation::plain(f)
    }

    fn step(&mut self, action: &JointAction, rng: &mut SimRng) -> Result<StepOutcome, EnvError> {
        if *action != JointAction::Passive {
            return Err(EnvError::WrongActionKind);
        }
        let rewards = self.rewards.row(self.state).to_vec();
        let u: f64 = rng.random();
        let row = self.transition.row(self.state);
        let mut acc = 0.0;
        let mut next = row.len() - 1;
        for (s, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = s;
                break;
            }
        }
        self.state = next;
        Ok(StepOutcome::from_rewards(rewards, 0))
    }
}
