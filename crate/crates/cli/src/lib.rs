//! Experiment runner behind the `dvf` binary: configuration, training
//! sweeps, evaluation and the oracle check suite.

pub mod checks;
pub mod config;
pub mod eval;
pub mod run;
pub mod summary;

use dvf_core::approx::ApproxError;
use dvf_core::da2c::Da2cError;
use dvf_core::gmdp::EnvError;
use dvf_core::graph::GraphError;
use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig};

/// Built-in experiment configurations, by environment name.
pub const PRESETS: [(&str, &str); 3] = [
    ("colouring", include_str!("../configs/colouring.toml")),
    ("firefighting", include_str!("../configs/firefighting.toml")),
    ("radio", include_str!("../configs/radio.toml")),
];

pub fn preset(name: &str) -> Result<ExperimentConfig, CliError> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| CliError::Usage(format!("unknown preset {name:?}; expected colouring, firefighting or radio")))?;
    ExperimentConfig::parse(text).map_err(CliError::Config)
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("i/o: {0}")]
    Io(String),
    #[error("configuration: {0}")]
    Config(ConfigError),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Da2c(#[from] Da2cError),
}
