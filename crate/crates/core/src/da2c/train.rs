use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::advantage::{critic_target, discounted_returns, n_step_advantage, AdvantageConfig, CriticKind};
use super::update::{apply_gradient, GainCoefficients};
use super::Da2cError;
use crate::approx::{AgentGraph, Critic, CriticInput, Direction, LdActorState, LdGnnActor, Optimizer, OptimizerKind, StepTrace};
use crate::gmdp::{ActionSpace, EnvError, GmdpEnvironment, JointAction, Observation};
use crate::graph::{DiffusionOperator, InfluenceGraph};
use crate::rng::{derive_seed, stream, SimRng};

/// Builds one environment instance from a seed.
pub type EnvFactory<'a> = dyn Fn(u64) -> Result<Box<dyn GmdpEnvironment>, EnvError> + Sync + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anneal {
    /// `c_m` falls linearly to zero over the first half of training.
    #[default]
    LinearHalf,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Actor learning rate.
    pub c_j: f64,
    /// Critic learning rate.
    pub c_v: f64,
    /// Advantage scaling in the surrogate gain.
    pub c_r: f64,
    /// Entropy scaling.
    pub c_h: f64,
    /// Message bonus scaling.
    pub c_m: f64,
    pub iterations: usize,
    /// Rollout length `M`.
    pub rollout: usize,
    /// Environments run in lockstep per iteration.
    pub batch: usize,
    pub gamma: f64,
    #[serde(default)]
    pub anneal: Anneal,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub advantage: AdvantageConfig,
}

impl TrainConfig {
    /// Transmit power control scalings.
    pub fn transmit_power() -> Self {
        Self {
            c_j: 0.004,
            c_v: 0.002,
            c_r: 0.1,
            c_h: 1e-4,
            c_m: 0.2,
            iterations: 500,
            rollout: 5,
            batch: 64,
            gamma: 0.9,
            anneal: Anneal::LinearHalf,
            optimizer: OptimizerKind::Adam,
            advantage: AdvantageConfig::default(),
        }
    }

    /// Vector graph colouring scalings.
    pub fn colouring() -> Self {
        Self {
            c_j: 1.0,
            c_v: 6e-4,
            c_r: 5e-4,
            c_h: 0.0,
            c_m: 0.0,
            iterations: 3000,
            rollout: 10,
            ..Self::transmit_power()
        }
    }

    pub fn validate(&self) -> Result<(), Da2cError> {
        let bad = |m: &str| Err(Da2cError::Config(m.into()));
        if !(self.c_j > 0.0 && self.c_v > 0.0) {
            return bad("learning rates c_j and c_v must be positive");
        }
        if !(self.c_h >= 0.0 && self.c_m >= 0.0 && self.c_r.is_finite()) {
            return bad("c_h and c_m must be non-negative and c_r finite");
        }
        if self.rollout == 0 || self.batch == 0 {
            return bad("rollout length and batch size must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        self.advantage.validate()
    }

    /// Message bonus scaling at iteration `iter`.
    pub fn message_bonus(&self, iter: usize) -> f64 {
        match self.anneal {
            Anneal::Constant => self.c_m,
            Anneal::LinearHalf => {
                let half = self.iterations as f64 / 2.0;
                if half <= 0.0 {
                    return self.c_m;
                }
                self.c_m * (1.0 - iter as f64 / half).max(0.0)
            }
        }
    }
}

/// Metrics of one policy iteration, averaged over the batch and the rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iter: usize,
    /// Mean global reward.
    pub reward: f64,
    /// Mean `n⁻¹‖δ‖²`; zero without a critic.
    pub td_loss: f64,
    /// Mean per-agent policy entropy.
    pub entropy: f64,
    /// Mean messages per step.
    pub messages: f64,
    /// Some update was skipped because of a non-finite gradient.
    pub flagged: bool,
}

struct Pending {
    trace: Option<StepTrace>,
    v_now: Vec<f64>,
    rewards: Vec<f64>,
    global: f64,
}

struct Worker {
    env: Box<dyn GmdpEnvironment>,
    env_rng: SimRng,
    policy_rng: SimRng,
    graph: InfluenceGraph,
    op: DiffusionOperator,
    agents: AgentGraph,
    state: Option<LdActorState>,
    obs: Observation,
    pending: Vec<Pending>,
    actor_grad: Vec<f64>,
    reward: f64,
    td_loss: f64,
    entropy: f64,
    messages: f64,
}

struct StepOut {
    critic_grad: Option<Vec<f64>>,
}

struct Shared<'a> {
    actor: &'a LdGnnActor,
    critic: Option<&'a dyn Critic>,
    kind: CriticKind,
    advantage: AdvantageConfig,
    coeffs: GainCoefficients,
    space: ActionSpace,
}

impl Shared<'_> {
    fn advantages(&self, w: &Worker, idx: usize, v_boot: &[f64]) -> Result<Vec<f64>, Da2cError> {
        let p = &w.pending[idx];
        match self.kind {
            CriticKind::Dvf => {
                let window: Vec<Vec<f64>> = w.pending[idx..].iter().map(|q| q.rewards.clone()).collect();
                let cfg = AdvantageConfig {
                    w: window.len(),
                    mode: self.advantage.mode,
                };
                n_step_advantage(&cfg, &w.op, &window, &p.v_now, v_boot)
            }
            CriticKind::Ia2c | CriticKind::Na2c | CriticKind::Maa2c => {
                let y = critic_target(self.kind, &w.op, &w.graph, &p.rewards, v_boot)?;
                Ok(y.iter().zip(&p.v_now).map(|(y, v)| y - v).collect())
            }
            CriticKind::Rein => unreachable!("returns are formed at the end of the rollout"),
        }
    }

    /// Fold the oldest pending step into the actor gradient.
    fn settle(&self, w: &mut Worker, adv: &[f64]) {
        let mut p = w.pending.remove(0);
        if let Some(trace) = p.trace.as_mut() {
            let g = trace.gain_gradient(w.actor_grad.len(), adv, self.coeffs.c_r, self.coeffs.c_h, self.coeffs.c_m);
            for (a, b) in w.actor_grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
    }

    fn advance(&self, w: &mut Worker) -> Result<StepOut, Da2cError> {
        let (trace, action) = if self.space == ActionSpace::Passive {
            (None, JointAction::Passive)
        } else {
            let state = match w.state.take() {
                Some(s) => s,
                None => self.actor.initial_state(&w.obs, &w.graph)?,
            };
            let trace = self.actor.step(&w.obs, &w.graph, &state, &mut w.policy_rng)?;
            let action = trace.decision.action.clone();
            w.state = Some(trace.next_state.clone());
            (Some(trace), action)
        };
        let outcome = w.env.step(&action, &mut w.env_rng)?;
        if outcome.rewards.iter().any(|r| !r.is_finite()) {
            return Err(EnvError::NonFinite("rewards").into());
        }
        let next = w.env.observe();
        w.reward += outcome.global_reward;
        w.messages += outcome.messages as f64;
        if let Some(t) = &trace {
            w.entropy += t.entropies.iter().sum::<f64>() / t.entropies.len().max(1) as f64;
        }

        let mut critic_grad = None;
        let mut v_now = Vec::new();
        if let (Some(critic), true) = (self.critic, self.kind.uses_critic()) {
            let next_input = CriticInput {
                obs: &next,
                agents: &w.agents,
            };
            let v_next = if outcome.done {
                vec![0.0; outcome.rewards.len()]
            } else {
                critic.values(&next_input)?
            };
            let target = critic_target(self.kind, &w.op, &w.graph, &outcome.rewards, &v_next)?;
            let input = CriticInput {
                obs: &w.obs,
                agents: &w.agents,
            };
            let n = target.len() as f64;
            let mut loss = 0.0;
            let (v, g) = critic.value_and_vjp(&input, &mut |v: &[f64]| {
                let delta: Vec<f64> = target.iter().zip(v).map(|(y, v)| y - v).collect();
                loss = delta.iter().map(|d| d * d).sum::<f64>() / n;
                delta.iter().map(|d| -2.0 * d / n).collect()
            })?;
            w.td_loss += loss;
            critic_grad = Some(g);
            v_now = v;
            w.pending.push(Pending {
                trace,
                v_now: v_now.clone(),
                rewards: outcome.rewards,
                global: outcome.global_reward,
            });
            let ready = match self.kind {
                CriticKind::Dvf => w.pending.len() >= self.advantage.w,
                _ => true,
            };
            if ready {
                let adv = self.advantages(w, 0, &v_next)?;
                self.settle(w, &adv);
            }
        } else {
            w.pending.push(Pending {
                trace,
                v_now,
                rewards: outcome.rewards,
                global: outcome.global_reward,
            });
        }
        w.obs = next;
        Ok(StepOut { critic_grad })
    }

    /// Settle every step still waiting at the end of the rollout.
    fn finish(&self, w: &mut Worker) -> Result<(), Da2cError> {
        if w.pending.is_empty() {
            return Ok(());
        }
        if self.kind == CriticKind::Rein {
            let globals: Vec<f64> = w.pending.iter().map(|p| p.global).collect();
            let returns = discounted_returns(w.op.gamma(), &globals);
            for g in returns {
                let n = w.pending[0].rewards.len();
                self.settle(w, &vec![g; n]);
            }
            return Ok(());
        }
        let critic = self.critic.ok_or_else(|| Da2cError::Config("critic required".into()))?;
        let v_boot = critic.values(&CriticInput {
            obs: &w.obs,
            agents: &w.agents,
        })?;
        while !w.pending.is_empty() {
            let adv = self.advantages(w, 0, &v_boot)?;
            self.settle(w, &adv);
        }
        Ok(())
    }
}

/// Drives DA2C or a baseline over batches of freshly built environments.
pub struct Trainer<'f> {
    factory: &'f EnvFactory<'f>,
    actor: LdGnnActor,
    critic: Option<Box<dyn Critic + Send>>,
    kind: CriticKind,
    cfg: TrainConfig,
    seed: u64,
    iter: usize,
    actor_opt: Optimizer,
    critic_opt: Optimizer,
}

impl<'f> Trainer<'f> {
    pub fn new(
        factory: &'f EnvFactory<'f>,
        actor: LdGnnActor,
        critic: Option<Box<dyn Critic + Send>>,
        kind: CriticKind,
        cfg: TrainConfig,
        seed: u64,
    ) -> Result<Self, Da2cError> {
        cfg.validate()?;
        if kind.uses_critic() && critic.is_none() {
            return Err(Da2cError::Config(format!("critic kind {} needs a critic", kind.name())));
        }
        let actor_opt = Optimizer::new(cfg.optimizer, actor.store().len());
        let critic_opt = Optimizer::new(cfg.optimizer, critic.as_ref().map_or(0, |c| c.params().len()));
        Ok(Self {
            factory,
            actor,
            critic,
            kind,
            cfg,
            seed,
            iter: 0,
            actor_opt,
            critic_opt,
        })
    }

    pub fn actor(&self) -> &LdGnnActor {
        &self.actor
    }

    pub fn critic(&self) -> Option<&(dyn Critic + Send)> {
        self.critic.as_deref()
    }

    pub fn iterations_done(&self) -> usize {
        self.iter
    }

    pub fn into_parts(self) -> (LdGnnActor, Option<Box<dyn Critic + Send>>) {
        (self.actor, self.critic)
    }

    fn spawn(&self, b: usize) -> Result<Worker, Da2cError> {
        let idx = (self.iter * self.cfg.batch + b) as u64;
        let mut env = (self.factory)(derive_seed(self.seed, "env", idx))?;
        let mut env_rng = stream(self.seed, "env.step", idx);
        env.reset(&mut env_rng);
        let graph = env.graph().clone();
        let op = DiffusionOperator::new(&graph, self.cfg.gamma)?;
        let agents = AgentGraph::new(&graph);
        let obs = env.observe();
        Ok(Worker {
            env,
            env_rng,
            policy_rng: stream(self.seed, "policy", idx),
            graph,
            op,
            agents,
            state: None,
            obs,
            pending: Vec::new(),
            actor_grad: vec![0.0; self.actor.store().len()],
            reward: 0.0,
            td_loss: 0.0,
            entropy: 0.0,
            messages: 0.0,
        })
    }

    /// One policy iteration: `M` lockstep steps with online critic updates,
    /// then one actor update.
    pub fn iteration(&mut self) -> Result<TrainRecord, Da2cError> {
        let batch = self.cfg.batch;
        let mut workers: Vec<Worker> = (0..batch)
            .into_par_iter()
            .map(|b| self.spawn(b))
            .collect::<Result<_, _>>()?;
        let space = workers[0].env.action_space();
        let coeffs = GainCoefficients {
            c_r: self.cfg.c_r,
            c_h: self.cfg.c_h,
            c_m: self.cfg.message_bonus(self.iter),
        };
        let mut flagged = false;
        for _ in 0..self.cfg.rollout {
            let outs: Vec<StepOut> = {
                let shared = Shared {
                    actor: &self.actor,
                    critic: self.critic.as_deref().map(|c| c as &dyn Critic),
                    kind: self.kind,
                    advantage: self.cfg.advantage,
                    coeffs,
                    space,
                };
                workers
                    .par_iter_mut()
                    .map(|w| shared.advance(w))
                    .collect::<Result<_, _>>()?
            };
            if let Some(critic) = self.critic.as_mut() {
                let mut grad = vec![0.0; critic.params().len()];
                let mut any = false;
                for g in outs.iter().filter_map(|o| o.critic_grad.as_ref()) {
                    any = true;
                    for (a, b) in grad.iter_mut().zip(g) {
                        *a += b / batch as f64;
                    }
                }
                if any && !apply_gradient(critic.params_mut(), &grad, self.cfg.c_v, &mut self.critic_opt, Direction::Descend) {
                    flagged = true;
                }
            }
        }
        {
            let shared = Shared {
                actor: &self.actor,
                critic: self.critic.as_deref().map(|c| c as &dyn Critic),
                kind: self.kind,
                advantage: self.cfg.advantage,
                coeffs,
                space,
            };
            workers
                .par_iter_mut()
                .map(|w| shared.finish(w))
                .collect::<Result<Vec<()>, _>>()?;
        }

        let scale = 1.0 / (batch * self.cfg.rollout) as f64;
        let mut grad = vec![0.0; self.actor.store().len()];
        let (mut reward, mut td, mut entropy, mut messages) = (0.0, 0.0, 0.0, 0.0);
        for w in &workers {
            for (a, b) in grad.iter_mut().zip(&w.actor_grad) {
                *a += b * scale;
            }
            reward += w.reward * scale;
            td += w.td_loss * scale;
            entropy += w.entropy * scale;
            messages += w.messages * scale;
        }
        if space != ActionSpace::Passive
            && !apply_gradient(self.actor.store_mut().values_mut(), &grad, self.cfg.c_j, &mut self.actor_opt, Direction::Ascend)
        {
            flagged = true;
        }
        let record = TrainRecord {
            iter: self.iter,
            reward,
            td_loss: td,
            entropy,
            messages,
            flagged,
        };
        self.iter += 1;
        Ok(record)
    }

    /// Run the remaining iterations of the configured budget.
    pub fn run(&mut self) -> Result<Vec<TrainRecord>, Da2cError> {
        let mut out = Vec::with_capacity(self.cfg.iterations.saturating_sub(self.iter));
        while self.iter < self.cfg.iterations {
            out.push(self.iteration()?);
        }
        Ok(out)
    }
}

/// Train from scratch and return the records with the trained models.
pub fn train(
    factory: &EnvFactory<'_>,
    actor: LdGnnActor,
    critic: Option<Box<dyn Critic + Send>>,
    kind: CriticKind,
    cfg: TrainConfig,
    seed: u64,
) -> Result<(Vec<TrainRecord>, LdGnnActor, Option<Box<dyn Critic + Send>>), Da2cError> {
    let mut trainer = Trainer::new(factory, actor, critic, kind, cfg, seed)?;
    let records = trainer.run()?;
    let (actor, critic) = trainer.into_parts();
    Ok((records, actor, critic))
}
