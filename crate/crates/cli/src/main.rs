use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dvf_core::approx::checkpoint;
use dvf_core::da2c::CriticKind;
use dvf_core::oracle::divergence_demo;
use dvf_cli::checks::{run_checks, Fault};
use dvf_cli::eval::{evaluate, EvalPolicy};
use dvf_cli::run::{build_models, experiment_dir, run_experiment, write_json, ExperimentSummary};
use dvf_cli::{preset, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "dvf", version, about = "Diffusion value function experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment at its base point.
    Train(RunArgs),
    /// Train every seed at every point of the configured sweep.
    Sweep(RunArgs),
    /// Evaluate a saved actor, or the uniform policy, on fresh instances.
    Eval(EvalArgs),
    /// Run the oracle and invariant checks.
    Check(CheckArgs),
    /// Compare truncated local values with the DVF on a regular tree.
    DemoDivergence(DivergenceArgs),
}

#[derive(Args)]
struct Source {
    /// Experiment configuration file.
    #[arg(long, conflicts_with = "env")]
    config: Option<PathBuf>,
    /// Built-in configuration: colouring, firefighting or radio.
    #[arg(long)]
    env: Option<String>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        match (&self.config, &self.env) {
            (Some(path), _) => ExperimentConfig::load(path),
            (None, Some(name)) => preset(name),
            (None, None) => Err(CliError::Usage("pass --config <file> or --env <preset>".into())),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CriticArg {
    Dvf,
    Rein,
    Ia2c,
    Na2c,
    Maa2c,
}

impl From<CriticArg> for CriticKind {
    fn from(c: CriticArg) -> Self {
        match c {
            CriticArg::Dvf => CriticKind::Dvf,
            CriticArg::Rein => CriticKind::Rein,
            CriticArg::Ia2c => CriticKind::Ia2c,
            CriticArg::Na2c => CriticKind::Na2c,
            CriticArg::Maa2c => CriticKind::Maa2c,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Replace the configured seeds (repeatable).
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, value_enum)]
    critic: Option<CriticArg>,
    /// Output root; results go to <out>/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Experiment name, used as the output subdirectory.
    #[arg(long)]
    name: Option<String>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = self.source.load()?;
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(n) = self.iterations {
            cfg.train.iterations = n;
        }
        if let Some(c) = self.critic {
            cfg.critic = c.into();
        }
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        if let Some(name) = &self.name {
            cfg.name = name.clone();
        }
        cfg.validate().map_err(CliError::Config)?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    source: Source,
    /// Actor checkpoint written by `train`.
    #[arg(long, required_unless_present = "uniform")]
    checkpoint: Option<PathBuf>,
    /// Evaluate the uniform random policy instead of a checkpoint.
    #[arg(long, conflicts_with = "checkpoint")]
    uniform: bool,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the configured out-of-distribution graph generator.
    #[arg(long)]
    ood: bool,
    /// Write every step as a JSON line to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the summary here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    GammaColumn,
}

#[derive(Args)]
struct CheckArgs {
    /// Corrupt an input on purpose; the affected check must then fail.
    #[arg(long, value_enum)]
    inject_fault: Option<FaultArg>,
    /// Also write the results as JSON to this file.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct DivergenceArgs {
    #[arg(long, default_value_t = 3)]
    degree: usize,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 1000)]
    horizon: usize,
    /// Write both partial-sum series as JSON to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn io_err(path: &std::path::Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn report(summary: &ExperimentSummary, cfg: &ExperimentConfig) -> bool {
    for g in &summary.groups {
        let reward = g.final_reward.map_or("n/a".to_string(), |s| format!("{:.4}", s.mean));
        let eval = g.eval_reward.map_or("n/a".to_string(), |s| format!("{:.4}", s.mean));
        let failed = g.runs.iter().filter(|r| r.failed).count();
        print!("{}: final reward {reward}, eval reward {eval}", g.label);
        if let Some(f) = g.eval_fire_level {
            print!(", fire level {:.4}", f.mean);
        }
        if let Some(o) = g.eval_ood_reward {
            print!(", out-of-distribution eval reward {:.4}", o.mean);
        }
        if failed > 0 {
            print!(", {failed} of {} runs failed", g.runs.len());
        }
        println!();
    }
    println!("results in {}", experiment_dir(cfg).display());
    !summary.partial
}

fn train(args: &RunArgs, with_sweep: bool) -> Result<bool, CliError> {
    let cfg = args.config()?;
    if with_sweep && cfg.sweep.is_none() {
        return Err(CliError::Usage("the configuration has no [sweep] section".into()));
    }
    let summary = run_experiment(&cfg, with_sweep)?;
    Ok(report(&summary, &cfg))
}

fn eval(args: &EvalArgs) -> Result<bool, CliError> {
    let mut cfg = args.source.load()?;
    if let Some(e) = args.episodes {
        cfg.eval.episodes = e;
    }
    if args.steps.is_some() {
        cfg.eval.steps = args.steps;
    }
    if args.ood && cfg.eval.ood_graph.is_none() {
        return Err(CliError::Usage("--ood needs eval.ood_graph in the configuration".into()));
    }
    let (mut actor, _) = build_models(&cfg, args.seed)?;
    let policy = match &args.checkpoint {
        Some(path) => {
            actor.load(checkpoint::load(path)?)?;
            EvalPolicy::Actor(&actor)
        }
        None => EvalPolicy::Uniform,
    };
    let mut trace = match &args.trace {
        Some(path) => Some(BufWriter::new(File::create(path).map_err(io_err(path))?)),
        None => None,
    };
    let summary = evaluate(
        policy,
        &cfg.eval_env(args.ood),
        cfg.eval.episodes,
        cfg.eval_steps(),
        args.seed,
        trace.as_mut().map(|w| w as &mut dyn Write),
    )?;
    if let Some(mut w) = trace {
        w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    }
    match &args.out {
        Some(path) => write_json(path, &summary)?,
        None => println!("{}", serde_json::to_string_pretty(&summary).expect("serialisable")),
    }
    Ok(true)
}

fn check(args: &CheckArgs) -> Result<bool, CliError> {
    let fault = args.inject_fault.map(|FaultArg::GammaColumn| Fault::GammaColumn);
    let results = run_checks(fault);
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        let criterion = r.criterion.map_or("-".to_string(), |c| c.to_string());
        println!(
            "{tag} [{criterion:>2}] {:<30} residual {:.3e} (tolerance {:.1e}, {:.2}s) {}",
            r.name, r.residual, r.tolerance, r.seconds, r.detail
        );
    }
    if let Some(path) = &args.json {
        write_json(path, &results)?;
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} checks passed", results.len() - failed, results.len());
    Ok(failed == 0)
}

fn demo(args: &DivergenceArgs) -> Result<bool, CliError> {
    if args.degree < 1 || !(args.gamma > 0.0 && args.gamma < 1.0) || args.horizon == 0 {
        return Err(CliError::Usage("need degree >= 1, gamma in (0, 1) and horizon >= 1".into()));
    }
    let d = divergence_demo(args.degree, args.gamma, args.horizon);
    let local = d.local.last().copied().unwrap_or(0.0);
    let dvf = d.dvf.last().copied().unwrap_or(0.0);
    println!("horizon {}: local sum {local:.6e}, DVF sum {dvf:.12}", args.horizon);
    match d.local_exceeds(1e6) {
        Some(t) => println!("local sum exceeds 1e6 at horizon {t}"),
        None => println!("local sum stays below 1e6"),
    }
    println!("DVF limit gamma / (1 - gamma) = {:.12}", args.gamma / (1.0 - args.gamma));
    if let Some(path) = &args.out {
        write_json(path, &d)?;
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Train(a) => train(a, false),
        Command::Sweep(a) => train(a, true),
        Command::Eval(a) => eval(a),
        Command::Check(a) => check(a),
        Command::DemoDivergence(a) => demo(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
