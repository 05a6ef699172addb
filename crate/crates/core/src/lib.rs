//! Graph-based MDPs and the diffusion value function.
//!
//! The crate is organised bottom-up: [`graph`] builds influence graphs and
//! the diffusion operator, [`gmdp`] fixes the environment and policy
//! contracts, [`oracle`] evaluates values exactly or by Monte Carlo,
//! [`approx`] holds the learnable models, [`da2c`] trains them and [`envs`]
//! provides the benchmark environments.

pub mod approx;
pub mod da2c;
pub mod envs;
pub mod gmdp;
pub mod graph;
pub mod oracle;
pub mod rng;

pub use gmdp::{
    global_reward, rollout, ActionSpace, EnvError, GmdpEnvironment, JointAction, JointPolicy, Observation,
    StepOutcome, Transition,
};
pub use graph::{DiffusionOperator, EdgeGraph, GraphError, InfluenceGraph};
pub use rng::SimRng;
