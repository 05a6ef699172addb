//! Learnable function approximators on a hand-written reverse-mode tape.

mod actor;
pub mod checkpoint;
mod critic;
pub mod gradcheck;
mod layers;
mod optim;
mod params;
mod tape;

pub use actor::{ActorConfig, ActorHead, ActorPolicy, Decision, GateMode, LdActorState, LdGnnActor, StepTrace};
pub use critic::{AgentGraph, Critic, CriticConfig, CriticInput, GraphCritic, TabularCritic};
pub use layers::{
    bernoulli_gate_terms, bernoulli_head, categorical_head, gate_probabilities, mean_rows, sample_active_edges, Gru,
    Linear, MessagePass, Mlp, PROB_EPS,
};
pub use optim::{Direction, Optimizer, OptimizerKind};
pub use params::{ParamId, ParamSlice, ParameterStore};
pub use tape::{Gradients, RowMix, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproxError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("observation lacks the {0} view")]
    MissingView(&'static str),
    #[error("invalid action: {0}")]
    Action(String),
    #[error("incompatible parameters: {0}")]
    Incompatible(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o: {0}")]
    Io(String),
}
