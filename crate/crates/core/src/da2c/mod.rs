//! Diffusion TD learning, diffusion advantages and the single-loop
//! actor-critic trainer, together with the REINFORCE, independent,
//! neighbourhood and centralised baselines.

mod advantage;
mod train;
mod update;

use thiserror::Error;

use crate::approx::ApproxError;
use crate::gmdp::EnvError;
use crate::graph::GraphError;

pub use advantage::{
    critic_target, diffusion_target, discounted_returns, distributed_td_target, n_step_advantage, td_error,
    AdvantageConfig, AdvantageMode, CriticKind,
};
pub use train::{train, Anneal, EnvFactory, TrainConfig, TrainRecord, Trainer};
pub use update::{
    actor_gain_gradient, actor_step, apply_gradient, critic_loss_gradient, critic_step, step_gain, GainCoefficients,
    UpdateReport,
};

#[derive(Debug, Error)]
pub enum Da2cError {
    #[error("expected a vector of length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("expected a reward window of length {expected}, got {got}")]
    Window { expected: usize, got: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
}
