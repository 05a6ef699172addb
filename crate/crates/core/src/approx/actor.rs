//! The learned drop-edge actor: per-node embeddings, Bernoulli edge gates,
//! mean-aggregation message passing, recurrent node and edge memories and
//! an output head.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::layers::{bernoulli_gate_terms, bernoulli_head, categorical_head, gate_probabilities, sample_active_edges, Gru, Linear, MessagePass, Mlp};
use super::params::ParameterStore;
use super::tape::{Tape, Var};
use super::ApproxError;
use crate::gmdp::{ActionSpace, EnvError, JointAction, JointPolicy, Observation, PolicyOutput};
use crate::graph::InfluenceGraph;
use crate::rng::{stream, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Every edge passes a message.
    Full,
    /// No edge passes a message.
    None,
    /// Gates are sampled from learned probabilities.
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ActorHead {
    /// `bits` independent Bernoulli outputs per node.
    Bits { bits: usize },
    /// One candidate per agent, scored from its memory and candidate features.
    Choice { candidate_dim: usize },
    /// Agents are communication edges; the action is the gate itself.
    EdgeGates,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorConfig {
    pub head: ActorHead,
    pub gate: GateMode,
    pub obs_dim: usize,
    pub memory_dim: usize,
    pub edge_dim: usize,
    pub hidden: usize,
}

/// Recurrent state carried between steps of one environment instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LdActorState {
    pub node_memory: Array2<f64>,
    pub edge_memory: Array2<f64>,
}

/// A fixed choice of gates and outputs, used to re-evaluate log-probs.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub active: Vec<bool>,
    pub action: JointAction,
}

/// One recorded actor step. The tape holds every intermediate value so the
/// surrogate gain can be differentiated once advantages are known.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub tape: Tape,
    /// Per-agent log-probability column.
    pub log_prob: Var,
    /// Per-agent entropy column.
    pub entropy: Var,
    /// `Σ_e λ_e` over gated edges (`1 × 1`).
    pub gate_mass: Var,
    pub decision: Decision,
    pub log_probs: Vec<f64>,
    pub entropies: Vec<f64>,
    pub messages: usize,
    pub next_state: LdActorState,
}

impl StepTrace {
    /// Gradient of `c_r Σ_i logπ_i G_i + c_h Σ_i H_i + c_m Σ_e λ_e`.
    pub fn gain_gradient(&mut self, n_params: usize, advantages: &[f64], c_r: f64, c_h: f64, c_m: f64) -> Vec<f64> {
        let g = Array2::from_shape_vec((advantages.len(), 1), advantages.iter().map(|a| c_r * a).collect())
            .expect("column");
        let pg = self.tape.weighted_sum(self.log_prob, g);
        let h = self.tape.sum(self.entropy);
        let h = self.tape.affine(h, c_h, 0.0);
        let m = self.tape.affine(self.gate_mass, c_m, 0.0);
        let a = self.tape.add(pg, h);
        let j = self.tape.add(a, m);
        self.tape.backward(j, n_params)
    }
}

enum Sampling<'a> {
    Random(&'a mut SimRng),
    Forced(&'a Decision),
}

#[derive(Debug, Clone)]
pub struct LdGnnActor {
    cfg: ActorConfig,
    store: ParameterStore,
    embed: Mlp,
    gate: Option<Mlp>,
    edge_cell: Option<Gru>,
    pass: MessagePass,
    node_cell: Gru,
    bits_out: Option<Linear>,
    choice_out: Option<Mlp>,
}

/// Directed non-self edges of the node graph in sorted order.
fn gate_edges(graph: &InfluenceGraph) -> Vec<(usize, usize)> {
    graph.edges().filter(|(i, j)| i != j).collect()
}

impl LdGnnActor {
    pub fn new(cfg: ActorConfig, seed: u64) -> Result<Self, ApproxError> {
        if cfg.obs_dim == 0 || cfg.memory_dim == 0 || cfg.hidden == 0 {
            return Err(ApproxError::Config("actor dimensions must be positive".into()));
        }
        if matches!(cfg.head, ActorHead::Bits { bits: 0 }) {
            return Err(ApproxError::Config("bit head needs at least one bit".into()));
        }
        let mut rng = stream(seed, "init.actor", 0);
        let mut store = ParameterStore::new(seed);
        let (dx, de, h) = (cfg.memory_dim, cfg.edge_dim, cfg.hidden);
        let embed = Mlp::new(&mut store, &mut rng, "actor.embed", dx + cfg.obs_dim, h, dx);
        let learned = cfg.gate == GateMode::Learned;
        if learned && de == 0 {
            return Err(ApproxError::Config("learned gates need an edge memory".into()));
        }
        let gate = learned.then(|| Mlp::new(&mut store, &mut rng, "actor.gate", dx + de, h, 1));
        let edge_cell = learned.then(|| Gru::new(&mut store, &mut rng, "actor.edge_cell", 2 * dx, de));
        let pass = MessagePass::new(&mut store, &mut rng, "actor.pass", dx);
        let node_cell = Gru::new(&mut store, &mut rng, "actor.node_cell", dx, dx);
        let bits_out = match cfg.head {
            ActorHead::Bits { bits } => Some(Linear::new(&mut store, &mut rng, "actor.out", dx, bits)),
            _ => None,
        };
        let choice_out = match cfg.head {
            ActorHead::Choice { candidate_dim } => {
                Some(Mlp::new(&mut store, &mut rng, "actor.out", dx + candidate_dim, h, 1))
            }
            _ => None,
        };
        Ok(Self {
            cfg,
            store,
            embed,
            gate,
            edge_cell,
            pass,
            node_cell,
            bits_out,
            choice_out,
        })
    }

    pub fn config(&self) -> &ActorConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    /// Replace the parameters with a loaded store of identical layout.
    pub fn load(&mut self, store: ParameterStore) -> Result<(), ApproxError> {
        if store.slices() != self.store.slices() {
            return Err(ApproxError::Incompatible("actor parameter layout differs".into()));
        }
        self.store = store;
        Ok(())
    }

    fn node_view<'a>(&self, obs: &'a Observation, graph: &'a InfluenceGraph) -> Result<(&'a Array2<f64>, &'a InfluenceGraph), ApproxError> {
        match self.cfg.head {
            ActorHead::EdgeGates => {
                let comm = obs.comm.as_ref().ok_or(ApproxError::MissingView("comm"))?;
                Ok((&comm.node_features, &comm.graph))
            }
            _ => Ok((&obs.features, graph)),
        }
    }

    /// Zero memories sized for this observation and graph.
    pub fn initial_state(&self, obs: &Observation, graph: &InfluenceGraph) -> Result<LdActorState, ApproxError> {
        let (features, nodes) = self.node_view(obs, graph)?;
        let edges = if self.cfg.gate == GateMode::Learned {
            gate_edges(nodes).len()
        } else {
            0
        };
        Ok(LdActorState {
            node_memory: Array2::zeros((features.nrows(), self.cfg.memory_dim)),
            edge_memory: Array2::zeros((edges, self.cfg.edge_dim)),
        })
    }

    /// Sample one step.
    pub fn step(
        &self,
        obs: &Observation,
        graph: &InfluenceGraph,
        state: &LdActorState,
        rng: &mut SimRng,
    ) -> Result<StepTrace, ApproxError> {
        self.run(obs, graph, state, Sampling::Random(rng))
    }

    /// Re-evaluate one step at a fixed decision.
    pub fn evaluate(
        &self,
        obs: &Observation,
        graph: &InfluenceGraph,
        state: &LdActorState,
        decision: &Decision,
    ) -> Result<StepTrace, ApproxError> {
        self.run(obs, graph, state, Sampling::Forced(decision))
    }

    fn run(
        &self,
        obs: &Observation,
        graph: &InfluenceGraph,
        state: &LdActorState,
        mut sampling: Sampling<'_>,
    ) -> Result<StepTrace, ApproxError> {
        let store = &self.store;
        let (features, nodes) = self.node_view(obs, graph)?;
        let n = features.nrows();
        if features.ncols() != self.cfg.obs_dim {
            return Err(ApproxError::Dimension {
                what: "observation",
                expected: self.cfg.obs_dim,
                got: features.ncols(),
            });
        }
        if nodes.n() != n || state.node_memory.nrows() != n {
            return Err(ApproxError::Dimension {
                what: "node count",
                expected: nodes.n(),
                got: n,
            });
        }
        let mut tape = Tape::new();
        let x = tape.input(state.node_memory.clone())?;
        let o = tape.input(features.clone())?;
        let xo = tape.concat_cols(&[x, o]);
        let embed = self.embed.forward(&mut tape, store, xo);

        // Gates over non-self edges; edge (i, j) belongs to its tail i.
        let edges = gate_edges(nodes);
        let m = edges.len();
        let tails: Vec<usize> = edges.iter().map(|e| e.0).collect();
        let heads: Vec<usize> = edges.iter().map(|e| e.1).collect();
        let (active, gate_lp, gate_h, gate_mass, edge_next) = match (&self.gate, self.cfg.gate) {
            (Some(gate), GateMode::Learned) => {
                if state.edge_memory.nrows() != m {
                    return Err(ApproxError::Dimension {
                        what: "edge memory",
                        expected: m,
                        got: state.edge_memory.nrows(),
                    });
                }
                let e = tape.input(state.edge_memory.clone())?;
                let it = tape.gather_rows(embed, &tails);
                let gin = tape.concat_cols(&[it, e]);
                let logits = gate.forward(&mut tape, store, gin);
                let probs = gate_probabilities(&mut tape, logits);
                let p: Vec<f64> = tape.value(probs).iter().copied().collect();
                let active = match &mut sampling {
                    Sampling::Random(rng) => sample_active_edges(&p, rng),
                    Sampling::Forced(d) => d.active.clone(),
                };
                if active.len() != m {
                    return Err(ApproxError::Dimension {
                        what: "gate decisions",
                        expected: m,
                        got: active.len(),
                    });
                }
                let (lp, h) = bernoulli_gate_terms(&mut tape, probs, &active);
                let mass = tape.sum(probs);
                let ih = tape.gather_rows(embed, &heads);
                let pair = tape.concat_cols(&[it, ih]);
                let cell = self.edge_cell.as_ref().expect("learned gates carry an edge cell");
                let updated = cell.forward(&mut tape, store, pair, e);
                let next = tape.row_select(updated, e, Arc::new(active.clone()));
                (active, Some(lp), Some(h), mass, Some(next))
            }
            (_, mode) => {
                let active = vec![mode == GateMode::Full; m];
                let mass = tape.constant(Array2::from_elem((1, 1), if mode == GateMode::Full { m as f64 } else { 0.0 }));
                (active, None, None, mass, None)
            }
        };
        let messages = active.iter().filter(|&&a| a).count();
        let mut incoming = vec![Vec::new(); n];
        for (k, &(i, j)) in edges.iter().enumerate() {
            if active[k] {
                incoming[j].push(i);
            }
        }
        let z = self.pass.forward(&mut tape, store, embed, &incoming);
        let x_next = self.node_cell.forward(&mut tape, store, z, x);

        let by_tail = |tape: &mut Tape, col: Var| {
            let mut rows = vec![Vec::new(); n];
            for (k, &i) in tails.iter().enumerate() {
                rows[i].push((k, 1.0));
            }
            tape.mix(col, Arc::new(rows))
        };
        let (action, log_prob, entropy) = match self.cfg.head {
            ActorHead::Bits { bits } => {
                let out = self.bits_out.as_ref().expect("bit head");
                let logits = out.forward(&mut tape, store, x_next);
                let forced = match &sampling {
                    Sampling::Forced(d) => match &d.action {
                        JointAction::Bits { values, .. } => Some(values.as_slice()),
                        _ => return Err(ApproxError::Action("expected bits".into())),
                    },
                    _ => None,
                };
                let rng = match &mut sampling {
                    Sampling::Random(r) => Some(&mut **r),
                    _ => None,
                };
                let (values, lp, h) = bernoulli_head(&mut tape, logits, rng, forced);
                let (lp, h) = match (gate_lp, gate_h) {
                    (Some(glp), Some(gh)) => {
                        let a = by_tail(&mut tape, glp);
                        let b = by_tail(&mut tape, gh);
                        (tape.add(lp, a), tape.add(h, b))
                    }
                    _ => (lp, h),
                };
                (JointAction::Bits { bits, values }, lp, h)
            }
            ActorHead::Choice { candidate_dim } => {
                let choices = obs.choices.as_ref().ok_or(ApproxError::MissingView("choices"))?;
                if choices.features.ncols() != candidate_dim || choices.offsets.len() != n + 1 {
                    return Err(ApproxError::Dimension {
                        what: "candidates",
                        expected: candidate_dim,
                        got: choices.features.ncols(),
                    });
                }
                if let Some(i) = (0..n).find(|&i| choices.count(i) == 0) {
                    return Err(ApproxError::Action(format!("agent {i} has no candidates")));
                }
                let owners: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, choices.count(i))).collect();
                let xo = tape.gather_rows(x_next, &owners);
                let cf = tape.input(choices.features.clone())?;
                let cin = tape.concat_cols(&[xo, cf]);
                let out = self.choice_out.as_ref().expect("choice head");
                let scores = out.forward(&mut tape, store, cin);
                let forced = match &sampling {
                    Sampling::Forced(d) => match &d.action {
                        JointAction::Choice(p) => Some(p.as_slice()),
                        _ => return Err(ApproxError::Action("expected choices".into())),
                    },
                    _ => None,
                };
                let rng = match &mut sampling {
                    Sampling::Random(r) => Some(&mut **r),
                    _ => None,
                };
                let (picks, lp, h) = categorical_head(&mut tape, scores, Arc::new(choices.offsets.clone()), rng, forced);
                let (lp, h) = match (gate_lp, gate_h) {
                    (Some(glp), Some(gh)) => {
                        let a = by_tail(&mut tape, glp);
                        let b = by_tail(&mut tape, gh);
                        (tape.add(lp, a), tape.add(h, b))
                    }
                    _ => (lp, h),
                };
                (JointAction::Choice(picks), lp, h)
            }
            ActorHead::EdgeGates => {
                let comm = obs.comm.as_ref().ok_or(ApproxError::MissingView("comm"))?;
                let agents = comm.agent_edges.len();
                let mut rows = vec![Vec::new(); agents];
                let mut values = vec![false; agents];
                for (a, &(i, j)) in comm.agent_edges.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    let k = edges.binary_search(&(i, j)).map_err(|_| ApproxError::Action(format!("edge ({i}, {j}) not in graph")))?;
                    rows[a].push((k, 1.0));
                    values[a] = active[k];
                }
                let rows = Arc::new(rows);
                let (lp, h) = match (gate_lp, gate_h) {
                    (Some(glp), Some(gh)) => (tape.mix(glp, rows.clone()), tape.mix(gh, rows)),
                    _ => {
                        let z = tape.constant(Array2::zeros((agents, 1)));
                        (z, z)
                    }
                };
                (JointAction::Bits { bits: 1, values }, lp, h)
            }
        };
        let log_probs: Vec<f64> = tape.value(log_prob).iter().copied().collect();
        let entropies: Vec<f64> = tape.value(entropy).iter().map(|h| h.max(0.0)).collect();
        if log_probs.iter().any(|v| !v.is_finite()) {
            return Err(ApproxError::NonFinite("log-probabilities"));
        }
        let next_state = LdActorState {
            node_memory: tape.value(x_next).clone(),
            edge_memory: match edge_next {
                Some(e) => tape.value(e).clone(),
                None => state.edge_memory.clone(),
            },
        };
        Ok(StepTrace {
            tape,
            log_prob,
            entropy,
            gate_mass,
            decision: Decision { active, action },
            log_probs,
            entropies,
            messages,
            next_state,
        })
    }
}

/// A stateful sampling policy over one environment instance.
pub struct ActorPolicy<'a> {
    actor: &'a LdGnnActor,
    graph: InfluenceGraph,
    state: Option<LdActorState>,
    last_messages: usize,
}

impl<'a> ActorPolicy<'a> {
    pub fn new(actor: &'a LdGnnActor, graph: InfluenceGraph) -> Self {
        Self {
            actor,
            graph,
            state: None,
            last_messages: 0,
        }
    }

    /// Forget the recurrent memory, e.g. after an environment reset.
    pub fn reset(&mut self) {
        self.state = None;
    }

    pub fn last_messages(&self) -> usize {
        self.last_messages
    }
}

impl JointPolicy for ActorPolicy<'_> {
    fn act(&mut self, obs: &Observation, _: ActionSpace, rng: &mut SimRng) -> Result<PolicyOutput, EnvError> {
        let to_env = |e: ApproxError| EnvError::Config(e.to_string());
        let state = match self.state.take() {
            Some(s) => s,
            None => self.actor.initial_state(obs, &self.graph).map_err(to_env)?,
        };
        let trace = self.actor.step(obs, &self.graph, &state, rng).map_err(to_env)?;
        self.state = Some(trace.next_state);
        self.last_messages = trace.messages;
        Ok(PolicyOutput {
            action: trace.decision.action,
            log_probs: trace.log_probs,
            entropies: trace.entropies,
        })
    }
}
