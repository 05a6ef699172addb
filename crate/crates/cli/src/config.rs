//! Experiment configuration, read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};

use dvf_core::da2c::{CriticKind, TrainConfig};
use dvf_core::envs::EnvSpec;
use dvf_core::graph::GeneratorSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub env: EnvSpec,
    pub critic: CriticKind,
    #[serde(default)]
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub memory_dim: usize,
    pub hidden: usize,
    /// Edge embedding width; only the radio edge-GMDP uses it.
    pub edge_dim: usize,
    pub critic_hidden: usize,
    pub critic_layers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            memory_dim: 16,
            hidden: 16,
            edge_dim: 8,
            critic_hidden: 16,
            critic_layers: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// The environment's message or conflict penalty.
    #[serde(rename = "p_m")]
    PM,
    Gamma,
    #[serde(rename = "c_m")]
    CM,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::PM => "p_m",
            SweepVariable::Gamma => "gamma",
            SweepVariable::CM => "c_m",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Steps per evaluation episode; defaults to the rollout length.
    #[serde(default)]
    pub steps: Option<usize>,
    /// Evaluate on graphs from this generator instead of the training one.
    #[serde(default)]
    pub ood_graph: Option<GeneratorSpec>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 10,
            steps: None,
            ood_graph: None,
        }
    }
}

/// A configuration error with the offending field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| ConfigError {
            path: e.path().to_string(),
            message: e.inner().message().trim().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(CliError::Config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(invalid("name", "must be a plain, non-empty directory name"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(invalid("seeds", "seeds must be distinct"));
        }
        self.train.validate().map_err(|e| invalid("train", e.to_string()))?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(invalid("sweep.values", "at least one value is required"));
            }
            if let Some(k) = sweep.values.iter().position(|v| !v.is_finite()) {
                return Err(invalid(&format!("sweep.values[{k}]"), "values must be finite"));
            }
            if sweep.variable == SweepVariable::PM && matches!(self.env, EnvSpec::Firefighting { .. }) {
                return Err(invalid("sweep.variable", "firefighting has no p_m"));
            }
            for &v in &sweep.values {
                self.with_sweep(sweep.variable, v)
                    .train
                    .validate()
                    .map_err(|e| invalid("sweep.values", e.to_string()))?;
            }
        }
        if self.eval.episodes == 0 {
            return Err(invalid("eval.episodes", "at least one episode is required"));
        }
        if self.eval.steps == Some(0) {
            return Err(invalid("eval.steps", "must be positive"));
        }
        let m = &self.model;
        if m.memory_dim == 0 || m.hidden == 0 || m.critic_hidden == 0 {
            return Err(invalid("model", "widths must be positive"));
        }
        Ok(())
    }

    /// A copy with the swept variable set to `value`.
    pub fn with_sweep(&self, variable: SweepVariable, value: f64) -> Self {
        let mut cfg = self.clone();
        match variable {
            SweepVariable::PM => match &mut cfg.env {
                EnvSpec::Colouring { p_m, .. } => *p_m = value,
                EnvSpec::Radio { config, .. } => config.p_m = value,
                EnvSpec::Firefighting { .. } => {}
            },
            SweepVariable::Gamma => cfg.train.gamma = value,
            SweepVariable::CM => cfg.train.c_m = value,
        }
        cfg
    }

    /// The environment used for evaluation; with `ood`, the configured
    /// out-of-distribution generator replaces the training one.
    pub fn eval_env(&self, ood: bool) -> EnvSpec {
        let mut env = self.env.clone();
        if let Some(ood) = self.eval.ood_graph.as_ref().filter(|_| ood) {
            match &mut env {
                EnvSpec::Colouring { graph, .. } | EnvSpec::Radio { graph, .. } => *graph = ood.clone(),
                EnvSpec::Firefighting { .. } => {}
            }
        }
        env
    }

    pub fn eval_steps(&self) -> usize {
        self.eval.steps.unwrap_or(self.train.rollout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
schema_version = 1
name = "t"
critic = "dvf"
seeds = [1, 2]

[env]
kind = "colouring"
p_m = 0.4
graph = { kind = "erdos_renyi", n = 10, mean_degree = 3.0 }

[train]
c_j = 0.003
c_v = 0.001
c_r = 1.0
c_h = 0.0
c_m = 0.0
iterations = 2
rollout = 3
batch = 2
gamma = 0.9
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.critic, CriticKind::Dvf);
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let err = ExperimentConfig::parse(&BASE.replace("batch = 2", "batch = 2\nbatchsize = 3")).unwrap_err();
        assert_eq!(err.path, "train.batchsize");
        assert!(err.message.contains("batchsize"), "{err}");
        let err = ExperimentConfig::parse(&BASE.replace("mean_degree = 3.0", "mean_degree = 3.0, p = 1")).unwrap_err();
        assert!(err.path.starts_with("env"), "{err}");
    }

    #[test]
    fn wrong_types_name_their_path() {
        let err = ExperimentConfig::parse(&BASE.replace("rollout = 3", "rollout = \"three\"")).unwrap_err();
        assert_eq!(err.path, "train.rollout");
    }

    #[test]
    fn invalid_values_are_rejected() {
        let cases = [
            ("schema_version = 1", "schema_version = 2", "schema_version"),
            ("seeds = [1, 2]", "seeds = []", "seeds"),
            ("seeds = [1, 2]", "seeds = [1, 1]", "seeds"),
            ("gamma = 0.9", "gamma = 1.0", "train"),
            ("name = \"t\"", "name = \"a/b\"", "name"),
        ];
        for (from, to, path) in cases {
            let err = ExperimentConfig::parse(&BASE.replace(from, to)).unwrap_err();
            assert_eq!(err.path, path, "{to}: {err}");
        }
        let sweep = format!("{BASE}\n[sweep]\nvariable = \"p_m\"\nvalues = [0.2, nan]\n");
        assert_eq!(ExperimentConfig::parse(&sweep).unwrap_err().path, "sweep.values[1]");
    }

    #[test]
    fn sweep_sets_the_variable() {
        let cfg = ExperimentConfig::parse(BASE).unwrap();
        match cfg.with_sweep(SweepVariable::PM, 1.2).env {
            EnvSpec::Colouring { p_m, .. } => assert_eq!(p_m, 1.2),
            _ => unreachable!(),
        }
        assert_eq!(cfg.with_sweep(SweepVariable::Gamma, 0.5).train.gamma, 0.5);
    }

    #[test]
    fn ood_swaps_only_the_generator() {
        let text = format!("{BASE}\n[eval]\nepisodes = 3\nood_graph = {{ kind = \"barabasi_albert\", n = 10, m = 2 }}\n");
        let cfg = ExperimentConfig::parse(&text).unwrap();
        let expected = EnvSpec::Colouring {
            graph: GeneratorSpec::BarabasiAlbert { n: 10, m: 2 },
            colours: 3,
            p_m: 0.4,
        };
        assert_eq!(cfg.eval_env(true), expected);
        assert_eq!(cfg.eval_env(false), cfg.env);
    }
}
