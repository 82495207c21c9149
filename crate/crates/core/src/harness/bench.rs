//! Strategy × budget × seed benchmark suites on synthetic spaces.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluator::TableEvaluator;
use super::runlog::render_runlog;
use super::synth::{synth_space, SyntheticSpec};
use crate::error::{Error, Result};
use crate::explore::{run, ObjectiveSpec, RunLog, Strategy, TuneConfig};
use crate::importance::{feature_importance, ImportanceVector};
use crate::metrics::{cost_to_rank_with, rank_of_best_with, summarize, FrontTable, RankTable};
use crate::space::{Dataset, Sense};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl Seeds {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range { start, count } => (*start..start + count).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub strategies: Vec<Strategy>,
    pub budgets: Vec<usize>,
    pub seeds: Seeds,
    #[serde(default)]
    pub synthetic: SyntheticSpec,
    #[serde(default = "one")]
    pub batch: usize,
    /// Overrides `p = (b − 10) / 2`.
    #[serde(default)]
    pub initial: Option<usize>,
    #[serde(default)]
    pub theta: Option<usize>,
    #[serde(default = "default_targets")]
    pub target_ranks: Vec<usize>,
    /// Worker threads; `None` uses rayon's default.
    #[serde(default)]
    pub threads: Option<usize>,
}

fn one() -> usize {
    1
}

fn default_targets() -> Vec<usize> {
    vec![1, 10]
}

impl SuiteConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("suite config: {}", e)))
    }

    pub fn objectives(&self) -> Vec<ObjectiveSpec> {
        self.synthetic.objective_names().into_iter().map(|n| ObjectiveSpec::new(n, Sense::Minimize)).collect()
    }

    pub fn tune_config(&self, strategy: Strategy, budget: usize, seed: u64) -> TuneConfig {
        let mut cfg = TuneConfig::new(strategy, budget, self.objectives(), seed);
        cfg.batch = self.batch;
        if let Some(p) = self.initial {
            cfg.initial = p;
        }
        if let Some(t) = self.theta {
            cfg.theta = t;
        }
        cfg
    }
}

/// Scores of one finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMetrics {
    pub strategy: String,
    pub budget: usize,
    pub seed: u64,
    pub evaluations: usize,
    pub infeasible: usize,
    pub best_rank: usize,
    /// One entry per target rank.
    pub cost_to_rank: Vec<Option<usize>>,
    pub adrs: Option<f64>,
}

/// Precomputed ground-truth tables for scoring many runs.
pub struct Scorer<'a> {
    truth: &'a Dataset,
    first: usize,
    ranks: RankTable,
    front: Option<FrontTable>,
    targets: Vec<usize>,
}

impl<'a> Scorer<'a> {
    pub fn new(truth: &'a Dataset, objectives: &[ObjectiveSpec], targets: &[usize]) -> Result<Self> {
        let cols = objectives
            .iter()
            .map(|o| {
                truth
                    .objective_index(&o.name)
                    .map(|j| (j, o.sense))
                    .map_err(|_| Error::Metrics(format!("ground truth has no objective `{}`", o.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        let (first, sense) = *cols.first().ok_or_else(|| Error::Metrics("no objectives".into()))?;
        let front = if cols.len() > 1 { Some(FrontTable::new(truth, &cols)?) } else { None };
        Ok(Scorer { truth, first, ranks: RankTable::new(truth, first, sense)?, front, targets: targets.to_vec() })
    }

    pub fn score(&self, log: &RunLog) -> Result<CellMetrics> {
        Ok(CellMetrics {
            strategy: log.config.strategy.to_string(),
            budget: log.config.budget,
            seed: log.seed(),
            evaluations: log.records.len(),
            infeasible: log.records.iter().filter(|r| !r.feasible).count(),
            best_rank: rank_of_best_with(log, self.truth, self.first, &self.ranks)?,
            cost_to_rank: self
                .targets
                .iter()
                .map(|&t| cost_to_rank_with(log, self.truth, self.first, &self.ranks, t))
                .collect::<Result<_>>()?,
            adrs: self.front.as_ref().map(|f| f.adrs_of_log(log, self.truth)).transpose()?,
        })
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn render_metrics_csv(rows: &[CellMetrics], targets: &[usize]) -> String {
    let mut out = String::from("strategy,budget,seed,evaluations,infeasible,best_rank");
    for t in targets {
        let _ = write!(out, ",cost_to_rank@{}", t);
    }
    out.push_str(",adrs\n");
    for r in rows {
        let _ =
            write!(out, "{},{},{},{},{},{}", r.strategy, r.budget, r.seed, r.evaluations, r.infeasible, r.best_rank);
        for c in &r.cost_to_rank {
            let _ = write!(out, ",{}", opt(*c));
        }
        let _ = writeln!(out, ",{}", opt(r.adrs));
    }
    out
}

/// Long-format summary per (strategy, budget): best rank and ADRS as mean/std,
/// and for each target the fraction of runs that reached it with the mean cost
/// among those that did.
pub fn render_aggregate_csv(rows: &[CellMetrics], targets: &[usize]) -> Result<String> {
    let mut out = String::from("strategy,budget,metric,mean,std,count\n");
    let mut groups: Vec<(&str, usize, Vec<&CellMetrics>)> = Vec::new();
    for r in rows {
        match groups.last_mut() {
            Some((s, b, g)) if *s == r.strategy && *b == r.budget => g.push(r),
            _ => groups.push((&r.strategy, r.budget, vec![r])),
        }
    }
    for (s, b, g) in groups {
        let mut line = |metric: String, vals: &[f64]| -> Result<()> {
            if vals.is_empty() {
                let _ = writeln!(out, "{},{},{},,,0", s, b, metric);
            } else {
                let m = summarize(vals)?;
                let _ = writeln!(out, "{},{},{},{},{},{}", s, b, metric, m.mean, m.std, m.count);
            }
            Ok(())
        };
        line("best_rank".into(), &g.iter().map(|r| r.best_rank as f64).collect::<Vec<_>>())?;
        for (i, t) in targets.iter().enumerate() {
            let reached: Vec<f64> = g.iter().map(|r| if r.cost_to_rank[i].is_some() { 1.0 } else { 0.0 }).collect();
            line(format!("reached@{}", t), &reached)?;
            let costs: Vec<f64> = g.iter().filter_map(|r| r.cost_to_rank[i].map(|c| c as f64)).collect();
            line(format!("cost_to_rank@{}", t), &costs)?;
        }
        let adrs: Vec<f64> = g.iter().filter_map(|r| r.adrs).collect();
        if !adrs.is_empty() {
            line("adrs".into(), &adrs)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct CellFailure {
    pub strategy: Strategy,
    pub budget: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    /// Sorted by (strategy, budget, seed).
    pub rows: Vec<CellMetrics>,
    pub runlogs: Vec<RunLog>,
    pub failures: Vec<CellFailure>,
    pub targets: Vec<usize>,
}

impl BenchReport {
    pub fn metrics_csv(&self) -> String {
        render_metrics_csv(&self.rows, &self.targets)
    }

    pub fn aggregate_csv(&self) -> Result<String> {
        render_aggregate_csv(&self.rows, &self.targets)
    }

    /// Mean best rank of one strategy over all its cells.
    pub fn mean_best_rank(&self, strategy: Strategy) -> Option<f64> {
        let v: Vec<f64> =
            self.rows.iter().filter(|r| r.strategy == strategy.as_str()).map(|r| r.best_rank as f64).collect();
        summarize(&v).ok().map(|s| s.mean)
    }

    pub fn mean_adrs(&self, strategy: Strategy) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.strategy == strategy.as_str()).filter_map(|r| r.adrs).collect();
        summarize(&v).ok().map(|s| s.mean)
    }

    /// Writes `metrics.csv`, `aggregate.csv` and `runlogs/<strategy>_b<budget>_s<seed>.jsonl`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let logs = dir.join("runlogs");
        std::fs::create_dir_all(&logs)?;
        std::fs::write(dir.join("metrics.csv"), self.metrics_csv())?;
        std::fs::write(dir.join("aggregate.csv"), self.aggregate_csv()?)?;
        for l in &self.runlogs {
            let name = format!("{}_b{}_s{}.jsonl", l.config.strategy, l.config.budget, l.seed());
            std::fs::write(logs.join(name), render_runlog(l)?)?;
        }
        Ok(())
    }
}

/// Importance for the cluster strategies, learned from the sibling ("prior
/// design") dataset on the first objective.
pub fn prior_importance(spec: &SyntheticSpec) -> Result<ImportanceVector> {
    let prior = synth_space(&spec.sibling())?;
    feature_importance(&prior, &spec.objective_names()[0])
}

pub fn bench(suite: &SuiteConfig) -> Result<BenchReport> {
    if suite.strategies.is_empty() || suite.budgets.is_empty() {
        return Err(Error::Config("suite needs at least one strategy and one budget".into()));
    }
    let seeds = suite.seeds.to_vec();
    if seeds.is_empty() {
        return Err(Error::Config("suite needs at least one seed".into()));
    }
    if suite.target_ranks.contains(&0) {
        return Err(Error::Config("target ranks start at 1".into()));
    }
    let truth = synth_space(&suite.synthetic)?;
    let importance = prior_importance(&suite.synthetic)?;
    let objectives = suite.objectives();
    let names: Vec<String> = objectives.iter().map(|o| o.name.clone()).collect();
    let evaluator = TableEvaluator::new(truth.clone(), &names)?;
    let scorer = Scorer::new(&truth, &objectives, &suite.target_ranks)?;

    let mut cells: Vec<(Strategy, usize, u64)> = Vec::new();
    for &s in &suite.strategies {
        for &b in &suite.budgets {
            for &seed in &seeds {
                cells.push((s, b, seed));
            }
        }
    }
    // every cell is a pure function of its coordinates, so order is restored by sorting
    cells.sort_by(|a, b| (a.0.as_str(), a.1, a.2).cmp(&(b.0.as_str(), b.1, b.2)));
    cells.dedup();
    for &(s, b, _) in &cells {
        suite.tune_config(s, b, 0).validate()?;
    }

    let run_cell = |&(s, b, seed): &(Strategy, usize, u64)| -> Result<(CellMetrics, RunLog)> {
        let cfg = suite.tune_config(s, b, seed);
        let log = run(truth.space(), &evaluator, &cfg, Some(&importance))?;
        Ok((scorer.score(&log)?, log))
    };
    let results: Vec<Result<(CellMetrics, RunLog)>> = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(t) = suite.threads {
            builder = builder.num_threads(t);
        }
        let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {}", e)))?;
        pool.install(|| cells.par_iter().map(run_cell).collect())
    };

    let mut report =
        BenchReport { rows: vec![], runlogs: vec![], failures: vec![], targets: suite.target_ranks.clone() };
    for (&(strategy, budget, seed), r) in cells.iter().zip(results) {
        match r {
            Ok((m, l)) => {
                report.rows.push(m);
                report.runlogs.push(l);
            }
            Err(e) => report.failures.push(CellFailure { strategy, budget, seed, error: e.to_string() }),
        }
    }
    Ok(report)
}
