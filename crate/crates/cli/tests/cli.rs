use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use dvf_cli::run::{read_records, run_experiment, ExperimentSummary};
use dvf_cli::ExperimentConfig;

fn config(out: &Path, extra: &str) -> ExperimentConfig {
    let text = format!(
        r#"
schema_version = 1
name = "small"
critic = "dvf"
seeds = [1]
output = "{}"

[env]
kind = "colouring"
p_m = 0.4
graph = {{ kind = "erdos_renyi", n = 8, mean_degree = 2.0 }}

[model]
memory_dim = 4
hidden = 4
edge_dim = 2
critic_hidden = 4
critic_layers = 1

[train]
c_j = 0.003
c_v = 0.001
c_r = 1.0
c_h = 0.0
c_m = 0.0
iterations = 1
rollout = 3
batch = 2
gamma = 0.9
optimizer = "adam"

[eval]
episodes = 2
{extra}
"#,
        out.display()
    );
    ExperimentConfig::parse(&text).unwrap()
}

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn dvf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dvf"))
}

#[test]
fn one_iteration_one_seed_gives_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "");
    let summary = run_experiment(&cfg, false).unwrap();
    assert!(!summary.partial);
    let records = read_records(&tmp.path().join("small/base/1/records.csv")).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].iter, 0);
    assert!(tmp.path().join("small/summary.json").exists());
    assert!(tmp.path().join("small/base/1/actor.ckpt").exists());
    assert!(tmp.path().join("small/base/1/critic.ckpt").exists());
}

#[test]
fn sweep_groups_runs_by_value() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path(), "[sweep]\nvariable = \"p_m\"\nvalues = [0.2, 0.4, 0.8]\n");
    cfg.seeds = vec![3, 4];
    let summary = run_experiment(&cfg, true).unwrap();
    assert_eq!(summary.sweep_variable.as_deref(), Some("p_m"));
    let labels: Vec<&str> = summary.groups.iter().map(|g| g.label.as_str()).collect();
    assert_eq!(labels, ["p_m=0.2", "p_m=0.4", "p_m=0.8"]);
    let runs: usize = summary.groups.iter().map(|g| g.runs.len()).sum();
    assert_eq!(runs, 6);
    for g in &summary.groups {
        let seeds: Vec<u64> = g.runs.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, [3, 4]);
        assert_eq!(g.final_reward.unwrap().n, 2);
        for s in [3, 4] {
            assert!(tmp.path().join("small").join(&g.label).join(s.to_string()).join("records.csv").exists());
        }
    }
    let text = fs::read_to_string(tmp.path().join("small/summary.json")).unwrap();
    let parsed: ExperimentSummary = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, summary);
}

#[test]
fn identical_configs_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let extra = "[sweep]\nvariable = \"gamma\"\nvalues = [0.5, 0.9]\n";
    let mut ca = config(a.path(), extra);
    let mut cb = config(b.path(), extra);
    ca.seeds = vec![1, 2];
    cb.seeds = vec![1, 2];
    ca.train.iterations = 3;
    cb.train.iterations = 3;
    run_experiment(&ca, true).unwrap();
    run_experiment(&cb, true).unwrap();
    let (fa, mut fb) = (files(a.path()), files(b.path()));
    // The recorded output root is the only intended difference.
    let key = "small/config.toml".to_string();
    let fixed = String::from_utf8(fb[&key].clone())
        .unwrap()
        .replace(&b.path().display().to_string(), &a.path().display().to_string());
    fb.insert(key, fixed.into_bytes());
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        assert!(bytes == &fb[name], "{name} differs");
    }
}

#[test]
fn mid_run_failure_keeps_partial_results() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path(), "");
    cfg.train.iterations = 5;
    cfg.train.c_j = 1e200;
    cfg.train.optimizer = dvf_core::approx::OptimizerKind::Sgd;
    let summary = run_experiment(&cfg, false).unwrap();
    assert!(summary.partial);
    let run = &summary.groups[0].runs[0];
    assert!(run.failed);
    assert!(run.error.is_some());
    assert!(run.iterations < 5);
    assert!(run.eval.is_none());
    let records = read_records(&tmp.path().join("small/base/1/records.csv")).unwrap();
    assert_eq!(records.len(), run.iterations);
}

#[test]
fn binary_reports_failures_in_its_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path(), "");
    cfg.train.c_j = 1e200;
    cfg.train.iterations = 5;
    cfg.train.optimizer = dvf_core::approx::OptimizerKind::Sgd;
    let path = tmp.path().join("bad.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    let out = dvf().args(["train", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let good = tmp.path().join("good.toml");
    fs::write(&good, config(tmp.path(), "").to_toml()).unwrap();
    let out = dvf().args(["train", "--config"]).arg(&good).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invalid_config_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("c.toml");
    let text = config(tmp.path(), "").to_toml().replace("rollout = 3", "rollout = -3");
    fs::write(&path, text).unwrap();
    let out = dvf().args(["train", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train.rollout"), "{err}");
}

#[test]
fn injected_fault_fails_the_gamma_check() {
    let out = dvf().args(["check", "--inject-fault", "gamma-column"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().find(|l| l.contains("gamma_structure")).unwrap();
    assert!(line.starts_with("FAIL"), "{line}");
}

#[test]
fn eval_rejects_incompatible_checkpoints_and_zero_episodes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "");
    run_experiment(&cfg, false).unwrap();
    let ckpt = tmp.path().join("small/base/1/actor.ckpt");
    let out = dvf().args(["eval", "--env", "radio", "--checkpoint"]).arg(&ckpt).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = dvf().args(["eval", "--env", "colouring", "--uniform", "--episodes", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_demo_writes_both_series() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("d.json");
    let out = dvf()
        .args(["demo-divergence", "--horizon", "50", "--out"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["local"].as_array().unwrap().len(), 50);
    assert_eq!(v["dvf"].as_array().unwrap().len(), 50);
}
