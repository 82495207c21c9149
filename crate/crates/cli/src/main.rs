use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fist_core::cluster::{partition, sigma_analysis};
use fist_core::explore::{run, ObjectiveSpec, Strategy, TuneConfig};
use fist_core::harness::{
    bench, bench::render_metrics_csv, read_runlog, synth_space, write_runlog, EvaluatorBinding, Scorer, SuiteConfig,
    SyntheticSpec,
};
use fist_core::importance::{
    aggregate_importance, feature_importance, importance_mask, parse_importance_csv, render_importance_csv,
    ImportanceVector, MaskRule,
};
use fist_core::space::{load_table, parse_space, render_space, Dataset, ParameterSpace};
use fist_core::{Error, Result};

/// Feature-importance-guided tuning of categorical design-flow parameters.
#[derive(Parser)]
#[command(name = "fist", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit a synthetic space definition and its complete ground-truth table.
    Synth(SynthArgs),
    /// Learn per-feature importance from labeled datasets.
    Importance(ImportanceArgs),
    /// Run one tuning strategy and write its run log.
    Tune(TuneArgs),
    /// Run a strategy × budget × seed suite on a synthetic space.
    Bench(BenchArgs),
    /// Score run logs against a complete ground-truth table.
    Metrics(MetricsArgs),
    /// Compare sample spread for random, in-cluster and cross-cluster draws.
    Sigma(SigmaArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Option count per feature, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [3, 3, 3, 2, 2, 2, 2, 2, 2])]
    counts: Vec<usize>,
    #[arg(long, default_value_t = 0.6)]
    gamma: f64,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 1)]
    objectives: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Generate the prior-design sibling (same profile, different value tables) instead.
    #[arg(long)]
    sibling: bool,
    /// Where to write the space definition (JSON).
    #[arg(long)]
    space_out: PathBuf,
    /// Where to write the ground-truth table (CSV).
    #[arg(long)]
    truth_out: PathBuf,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long)]
    space: PathBuf,
    /// Labeled dataset CSV; repeat to aggregate several prior designs.
    #[arg(long = "data", required = true)]
    data: Vec<PathBuf>,
    /// Restrict to these objectives (default: every objective of the first dataset).
    #[arg(long)]
    objective: Vec<String>,
    /// Directory receiving `importance_<objective>.csv`; stdout if omitted
    /// (single objective only).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    space: PathBuf,
    #[arg(long, default_value = "fist")]
    strategy: Strategy,
    #[arg(long)]
    budget: usize,
    /// Model-less samples p (default (budget − 10) / 2).
    #[arg(long)]
    initial: Option<usize>,
    /// Exploration iterations.
    #[arg(long)]
    theta: Option<usize>,
    #[arg(long)]
    depth_init: Option<usize>,
    #[arg(long)]
    depth_final: Option<usize>,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `name:min` or `name:max`; repeat for several objectives.
    #[arg(long = "objective", required = true, value_parser = parse_objective)]
    objectives: Vec<ObjectiveSpec>,
    /// Importance CSV (`feature,importance,rank`).
    #[arg(long, conflicts_with = "prior_data")]
    importance: Option<PathBuf>,
    /// Prior-design dataset CSVs; importance of the first objective is averaged over them.
    #[arg(long)]
    prior_data: Vec<PathBuf>,
    /// Shell command printing `objective=value` lines.
    #[arg(long, conflicts_with = "table", required_unless_present = "table")]
    evaluator: Option<String>,
    /// Complete or partial labeled table to evaluate against.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Per-evaluation timeout in seconds (command mode).
    #[arg(long)]
    timeout: Option<f64>,
    /// Extra attempts after a failed evaluation (command mode).
    #[arg(long, default_value_t = 0)]
    retries: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Suite definition (JSON).
    #[arg(long)]
    suite: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the suite's thread count.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    space: PathBuf,
    /// Complete ground-truth table.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long = "runlog", required = true)]
    runlogs: Vec<PathBuf>,
    #[arg(long = "target-rank", default_values_t = [1, 10])]
    target_ranks: Vec<usize>,
    /// Output CSV; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SigmaArgs {
    #[arg(long)]
    space: PathBuf,
    /// Complete labeled table.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    objective: String,
    /// Importance CSV defining the mask.
    #[arg(long, required_unless_present = "true_importance", conflicts_with = "true_importance")]
    importance: Option<PathBuf>,
    /// Learn the mask from the same table.
    #[arg(long)]
    true_importance: bool,
    /// Keep only the k most important features instead of the median rule.
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long, default_value_t = 10)]
    group_size: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_objective(s: &str) -> std::result::Result<ObjectiveSpec, String> {
    ObjectiveSpec::parse(s).map_err(|e| e.to_string())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {}", path.display(), e)))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Config(format!("cannot write {}: {}", path.display(), e)))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{}", text);
            Ok(())
        }
    }
}

fn load_space(path: &Path) -> Result<ParameterSpace> {
    parse_space(&read(path)?)
}

fn load_data(path: &Path, space: &ParameterSpace) -> Result<Dataset> {
    load_table(&read(path)?, space).map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut spec = SyntheticSpec {
        option_counts: a.counts,
        gamma: a.gamma,
        beta: a.beta,
        epsilon: a.epsilon,
        objectives: a.objectives,
        seed: a.seed,
    };
    if a.sibling {
        spec = spec.sibling();
    }
    let d = synth_space(&spec)?;
    write(&a.space_out, &render_space(d.space()))?;
    write(&a.truth_out, &d.render_csv())
}

fn importance_from(space: &ParameterSpace, files: &[PathBuf], objective: &str) -> Result<ImportanceVector> {
    let priors =
        files.iter().map(|f| feature_importance(&load_data(f, space)?, objective)).collect::<Result<Vec<_>>>()?;
    if priors.len() == 1 {
        Ok(priors.into_iter().next().expect("one prior"))
    } else {
        aggregate_importance(&priors)
    }
}

fn cmd_importance(a: ImportanceArgs) -> Result<()> {
    let space = load_space(&a.space)?;
    let objectives =
        if a.objective.is_empty() { load_data(&a.data[0], &space)?.objective_names().to_vec() } else { a.objective };
    match &a.out_dir {
        None if objectives.len() != 1 => {
            Err(Error::Config("several objectives need --out-dir (or pick one with --objective)".into()))
        }
        None => {
            print!("{}", render_importance_csv(&space, &importance_from(&space, &a.data, &objectives[0])?)?);
            Ok(())
        }
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for o in &objectives {
                let csv = render_importance_csv(&space, &importance_from(&space, &a.data, o)?)?;
                write(&dir.join(format!("importance_{}.csv", o)), &csv)?;
            }
            Ok(())
        }
    }
}

/// Runs the tuner; `Ok(n)` carries the number of failed evaluations.
fn cmd_tune(a: TuneArgs) -> Result<usize> {
    let space = load_space(&a.space)?;
    let mut cfg = TuneConfig::new(a.strategy, a.budget, a.objectives, a.seed);
    cfg.batch = a.batch;
    if let Some(v) = a.initial {
        cfg.initial = v;
    }
    if let Some(v) = a.theta {
        cfg.theta = v;
    }
    if let Some(v) = a.depth_init {
        cfg.depth_init = v;
    }
    if let Some(v) = a.depth_final {
        cfg.depth_final = v;
    }
    cfg.validate()?;
    let names: Vec<String> = cfg.objectives.iter().map(|o| o.name.clone()).collect();

    let importance = match (&a.importance, a.prior_data.is_empty()) {
        (Some(f), _) => Some(parse_importance_csv(&read(f)?, &space)?),
        (None, false) => Some(importance_from(&space, &a.prior_data, &names[0])?),
        (None, true) => None,
    };
    let binding = match (a.evaluator, &a.table) {
        (Some(template), _) => {
            let timeout = match a.timeout {
                Some(t) if t > 0.0 && t.is_finite() => Some(Duration::from_secs_f64(t)),
                Some(t) => return Err(Error::Config(format!("timeout {} must be positive", t))),
                None => None,
            };
            EvaluatorBinding::Command { template, timeout, retries: a.retries }
        }
        (None, Some(t)) => EvaluatorBinding::Table(load_data(t, &space)?),
        (None, None) => return Err(Error::Config("need --evaluator or --table".into())),
    };
    let evaluator = binding.into_evaluator(&names)?;
    let log = run(&space, evaluator.as_ref(), &cfg, importance.as_ref())?;
    write_runlog(&a.out, &log)?;
    Ok(log.records.iter().filter(|r| !r.feasible).count())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let mut suite = SuiteConfig::parse(&read(&a.suite)?)?;
    if a.threads.is_some() {
        suite.threads = a.threads;
    }
    let report = bench(&suite)?;
    report.write(&a.out_dir)?;
    for f in &report.failures {
        eprintln!("cell {} b={} seed={} failed: {}", f.strategy, f.budget, f.seed, f.error);
    }
    Ok(())
}

fn cmd_metrics(a: MetricsArgs) -> Result<()> {
    if a.target_ranks.contains(&0) {
        return Err(Error::Config("target ranks start at 1".into()));
    }
    let space = load_space(&a.space)?;
    let truth = load_data(&a.truth, &space)?;
    let mut rows = Vec::new();
    for p in &a.runlogs {
        let log = read_runlog(p).map_err(|e| Error::Config(format!("{}: {}", p.display(), e)))?;
        let scorer = Scorer::new(&truth, &log.config.objectives, &a.target_ranks)?;
        rows.push(scorer.score(&log)?);
    }
    emit(a.out.as_deref(), &render_metrics_csv(&rows, &a.target_ranks))
}

fn cmd_sigma(a: SigmaArgs) -> Result<()> {
    let space = load_space(&a.space)?;
    let data = load_data(&a.data, &space)?;
    let imp = match &a.importance {
        Some(f) => parse_importance_csv(&read(f)?, &space)?,
        None => feature_importance(&data, &a.objective)?,
    };
    let rule = a.top_k.map_or(MaskRule::Median, MaskRule::TopK);
    let part = partition(&space, &importance_mask(&imp, rule)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let r = sigma_analysis(&data, &part, &a.objective, a.group_size, a.trials, &mut rng)?;
    emit(
        a.out.as_deref(),
        &format!(
            "sigma_random,sigma_in_cluster,sigma_cross_cluster\n{},{},{}\n",
            r.sigma_random, r.sigma_in_cluster, r.sigma_cross_cluster
        ),
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a).map(|_| 0),
        Command::Importance(a) => cmd_importance(a).map(|_| 0),
        Command::Tune(a) => cmd_tune(a),
        Command::Bench(a) => cmd_bench(a).map(|_| 0),
        Command::Metrics(a) => cmd_metrics(a).map(|_| 0),
        Command::Sigma(a) => cmd_sigma(a).map(|_| 0),
    };
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failed) => {
            eprintln!("fist: {} evaluation(s) failed after retries", failed);
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("fist: {}", e);
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
