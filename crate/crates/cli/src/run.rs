//! Seeded training runs, sweeps and their on-disk layout:
//!
//! ```text
//! <output>/<name>/config.toml
//! <output>/<name>/summary.json
//! <output>/<name>/<sweep-value>/<seed>/records.csv
//! <output>/<name>/<sweep-value>/<seed>/eval.json
//! <output>/<name>/<sweep-value>/<seed>/eval_ood.json (with eval.ood_graph)
//! <output>/<name>/<sweep-value>/<seed>/actor.ckpt (+ .json sidecar)
//! <output>/<name>/<sweep-value>/<seed>/critic.ckpt (+ .json sidecar)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use dvf_core::approx::{checkpoint, Critic, GraphCritic, LdGnnActor};
use dvf_core::da2c::{TrainRecord, Trainer};
use dvf_core::rng::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::eval::{evaluate, EvalPolicy, EvalSummary};
use crate::summary::Stats;
use crate::CliError;

/// Fresh actor and, when the critic kind learns one, critic for `seed`.
pub fn build_models(cfg: &ExperimentConfig, seed: u64) -> Result<(LdGnnActor, Option<GraphCritic>), CliError> {
    let m = &cfg.model;
    let actor = LdGnnActor::new(cfg.env.actor_config(m.memory_dim, m.edge_dim, m.hidden), derive_seed(seed, "actor", 0))?;
    let critic = if cfg.critic.uses_critic() {
        let c = cfg.env.critic_config(m.critic_hidden, m.critic_layers, cfg.critic.pooled());
        Some(GraphCritic::new(c, derive_seed(seed, "critic", 0))?)
    } else {
        None
    };
    Ok((actor, critic))
}

pub struct RunOutput {
    pub records: Vec<TrainRecord>,
    pub actor: LdGnnActor,
    pub critic: Option<GraphCritic>,
    /// Set when training stopped early; `records` holds what completed.
    pub error: Option<String>,
}

/// Train one seed, keeping the completed iterations if a later one fails.
pub fn train_seed(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput, CliError> {
    let (actor, critic) = build_models(cfg, seed)?;
    let template = critic.clone();
    let env = &cfg.env;
    let factory = |s: u64| env.build(s);
    let boxed = critic.map(|c| Box::new(c) as Box<dyn Critic + Send>);
    let mut trainer = Trainer::new(&factory, actor, boxed, cfg.critic, cfg.train, seed)?;
    let mut records = Vec::with_capacity(cfg.train.iterations);
    let mut error = None;
    while trainer.iterations_done() < cfg.train.iterations {
        match trainer.iteration() {
            Ok(r) => records.push(r),
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        }
    }
    let (actor, trained) = trainer.into_parts();
    let critic = match (template, trained) {
        (Some(mut c), Some(t)) => {
            c.params_mut().copy_from_slice(t.params());
            Some(c)
        }
        _ => None,
    };
    Ok(RunOutput {
        records,
        actor,
        critic,
        error,
    })
}

/// Mean reward over the last tenth of training (at least one iteration).
pub fn final_reward(records: &[TrainRecord]) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    let k = records.len().div_ceil(10);
    let tail = &records[records.len() - k..];
    Some(tail.iter().map(|r| r.reward).sum::<f64>() / k as f64)
}

pub fn write_records(path: &Path, records: &[TrainRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    for r in records {
        w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

pub fn read_records(path: &Path) -> Result<Vec<TrainRecord>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Io(e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serialisable") + "\n";
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub iterations: usize,
    pub failed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub final_reward: Option<f64>,
    pub eval: Option<EvalSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eval_ood: Option<EvalSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    /// Directory name of the sweep point.
    pub label: String,
    pub value: Option<f64>,
    pub runs: Vec<RunSummary>,
    pub final_reward: Option<Stats>,
    pub eval_reward: Option<Stats>,
    pub eval_fire_level: Option<Stats>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eval_ood_reward: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub critic: String,
    pub env: String,
    pub sweep_variable: Option<String>,
    pub groups: Vec<GroupSummary>,
    /// Some run failed; its group holds partial results.
    pub partial: bool,
}

fn sweep_points(cfg: &ExperimentConfig, with_sweep: bool) -> Vec<(String, Option<f64>, ExperimentConfig)> {
    match (&cfg.sweep, with_sweep) {
        (Some(sweep), true) => sweep
            .values
            .iter()
            .map(|&v| (format!("{}={v}", sweep.variable.name()), Some(v), cfg.with_sweep(sweep.variable, v)))
            .collect(),
        _ => vec![("base".to_string(), None, cfg.clone())],
    }
}

fn execute(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<RunSummary, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let run = train_seed(cfg, seed)?;
    write_records(&dir.join("records.csv"), &run.records)?;
    checkpoint::save(run.actor.store(), &dir.join("actor.ckpt"))?;
    if let Some(c) = &run.critic {
        checkpoint::save(c.store(), &dir.join("critic.ckpt"))?;
    }
    let eval_on = |ood: bool, file: &str| -> Result<EvalSummary, CliError> {
        let s = evaluate(
            EvalPolicy::Actor(&run.actor),
            &cfg.eval_env(ood),
            cfg.eval.episodes,
            cfg.eval_steps(),
            derive_seed(seed, "eval", 0),
            None,
        )?;
        write_json(&dir.join(file), &s)?;
        Ok(s)
    };
    let (eval, eval_ood) = if run.error.is_none() {
        let ood = match cfg.eval.ood_graph {
            Some(_) => Some(eval_on(true, "eval_ood.json")?),
            None => None,
        };
        (Some(eval_on(false, "eval.json")?), ood)
    } else {
        (None, None)
    };
    Ok(RunSummary {
        seed,
        iterations: run.records.len(),
        failed: run.error.is_some(),
        error: run.error,
        final_reward: final_reward(&run.records),
        eval,
        eval_ood,
    })
}

pub fn experiment_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output.join(&cfg.name)
}

/// Train every seed at every sweep point (only the base point unless
/// `with_sweep`), evaluate, and write the layout described above. Runs
/// execute in parallel and share no mutable state; the summary is assembled
/// in configuration order once all have finished.
pub fn run_experiment(cfg: &ExperimentConfig, with_sweep: bool) -> Result<ExperimentSummary, CliError> {
    let root = experiment_dir(cfg);
    fs::create_dir_all(&root).map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
    fs::write(root.join("config.toml"), cfg.to_toml()).map_err(|e| CliError::Io(e.to_string()))?;
    let points = sweep_points(cfg, with_sweep);
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| cfg.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let results: Vec<RunSummary> = jobs
        .par_iter()
        .map(|&(p, seed)| {
            let (label, _, point) = &points[p];
            let dir = root.join(label).join(seed.to_string());
            execute(point, seed, &dir).unwrap_or_else(|e| RunSummary {
                seed,
                iterations: 0,
                failed: true,
                error: Some(e.to_string()),
                final_reward: None,
                eval: None,
                eval_ood: None,
            })
        })
        .collect();

    let mut groups = Vec::with_capacity(points.len());
    let mut results = results.into_iter();
    for (label, value, _) in &points {
        let runs: Vec<RunSummary> = results.by_ref().take(cfg.seeds.len()).collect();
        let finals: Vec<f64> = runs.iter().filter_map(|r| r.final_reward).collect();
        let evals: Vec<&EvalSummary> = runs.iter().filter_map(|r| r.eval.as_ref()).collect();
        let rewards: Vec<f64> = evals.iter().map(|e| e.mean_reward).collect();
        let fires: Vec<f64> = evals.iter().filter_map(|e| e.mean_fire_level).collect();
        let ood: Vec<f64> = runs.iter().filter_map(|r| r.eval_ood.as_ref()).map(|e| e.mean_reward).collect();
        groups.push(GroupSummary {
            label: label.clone(),
            value: *value,
            final_reward: Stats::of(&finals),
            eval_reward: Stats::of(&rewards),
            eval_fire_level: Stats::of(&fires),
            eval_ood_reward: Stats::of(&ood),
            runs,
        });
    }
    let summary = ExperimentSummary {
        name: cfg.name.clone(),
        critic: cfg.critic.name().into(),
        env: cfg.env.name().into(),
        sweep_variable: cfg
            .sweep
            .as_ref()
            .filter(|_| with_sweep)
            .map(|s| s.variable.name().to_string()),
        partial: groups.iter().any(|g| g.runs.iter().any(|r| r.failed)),
        groups,
    };
    write_json(&root.join("summary.json"), &summary)?;
    Ok(summary)
}
