//! Ground-truth scoring of finished runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explore::{Phase, RunLog};
use crate::space::{Dataset, Sample, Sense};

/// Sorted sense-adjusted values of one objective over a complete dataset, for
/// repeated rank queries.
#[derive(Debug, Clone)]
pub struct RankTable {
    sorted: Vec<f64>,
    sense: Sense,
}

impl RankTable {
    pub fn new(truth: &Dataset, objective: usize, sense: Sense) -> Result<Self> {
        if !truth.is_complete() {
            return Err(Error::Metrics("ranks need a complete ground-truth dataset".into()));
        }
        let mut sorted: Vec<f64> = truth.rows().map(|(_, v)| sense.to_min(v[objective])).collect();
        sorted.sort_by(f64::total_cmp);
        Ok(RankTable { sorted, sense })
    }

    /// Competition rank of a value: 1 + number of strictly better samples.
    pub fn rank(&self, value: f64) -> usize {
        let v = self.sense.to_min(value);
        1 + self.sorted.partition_point(|&x| x < v)
    }
}

fn objective_of(log: &RunLog, truth: &Dataset, objective: &str) -> Result<(usize, Sense)> {
    let j = truth
        .objective_index(objective)
        .map_err(|_| Error::Metrics(format!("ground truth has no objective `{}`", objective)))?;
    let sense =
        log.config.objectives.iter().find(|o| o.name == objective).map(|o| o.sense).unwrap_or(truth.senses()[j]);
    Ok((j, sense))
}

fn truth_value(truth: &Dataset, s: &Sample, j: usize) -> Result<f64> {
    truth
        .get(s)
        .map(|v| v[j])
        .ok_or_else(|| Error::Metrics(format!("logged sample {} is missing from the ground truth", s)))
}

/// Rank of the best feasible evaluated sample (1 = global optimum).
pub fn rank_of_best(log: &RunLog, truth: &Dataset, objective: &str) -> Result<usize> {
    let (j, sense) = objective_of(log, truth, objective)?;
    let table = RankTable::new(truth, j, sense)?;
    rank_of_best_with(log, truth, j, &table)
}

pub fn rank_of_best_with(log: &RunLog, truth: &Dataset, objective: usize, table: &RankTable) -> Result<usize> {
    let mut best: Option<usize> = None;
    for r in log.feasible() {
        let rank = table.rank(truth_value(truth, &r.sample, objective)?);
        best = Some(best.map_or(rank, |b| b.min(rank)));
    }
    best.ok_or_else(|| Error::Metrics("run log has no feasible evaluation".into()))
}

/// 1-based position, among refinement evaluations only, of the first record
/// whose sample ranks within `target_rank`; `None` if no refinement record does.
pub fn cost_to_rank(log: &RunLog, truth: &Dataset, objective: &str, target_rank: usize) -> Result<Option<usize>> {
    let (j, sense) = objective_of(log, truth, objective)?;
    let table = RankTable::new(truth, j, sense)?;
    cost_to_rank_with(log, truth, j, &table, target_rank)
}

pub fn cost_to_rank_with(
    log: &RunLog,
    truth: &Dataset,
    objective: usize,
    table: &RankTable,
    target_rank: usize,
) -> Result<Option<usize>> {
    if log.records.is_empty() {
        return Err(Error::Metrics("empty run log".into()));
    }
    for (pos, r) in log.records.iter().filter(|r| r.phase != Phase::ModelLess).enumerate() {
        if r.feasible && table.rank(truth_value(truth, &r.sample, objective)?) <= target_rank {
            return Ok(Some(pos + 1));
        }
    }
    Ok(None)
}

/// Mutually non-dominated objective vectors, all taken from the source set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub points: Vec<Vec<f64>>,
}

/// `a` dominates `b`: no worse everywhere, strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64], senses: &[Sense]) -> bool {
    let mut strictly = false;
    for ((&x, &y), s) in a.iter().zip(b).zip(senses) {
        let (x, y) = (s.to_min(x), s.to_min(y));
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Indices of the non-dominated points, in input order.
pub fn pareto_indices(points: &[Vec<f64>], senses: &[Sense]) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::Metrics("pareto front of an empty set".into()));
    }
    if points.iter().any(|p| p.len() != senses.len() || p.iter().any(|v| !v.is_finite())) {
        return Err(Error::Metrics("points must be finite and match the objective count".into()));
    }
    // sort by the sense-adjusted lexicographic order; a point can only be
    // dominated by points that precede it
    let key = |i: usize| -> Vec<f64> { points[i].iter().zip(senses).map(|(&v, s)| s.to_min(v)).collect() };
    let mut order: Vec<usize> = (0..points.len()).collect();
    let keys: Vec<Vec<f64>> = (0..points.len()).map(key).collect();
    order.sort_by(|&a, &b| {
        keys[a]
            .iter()
            .zip(&keys[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut front: Vec<usize> = Vec::new();
    for &i in &order {
        if !front.iter().any(|&f| dominates(&points[f], &points[i], senses)) {
            front.push(i);
        }
    }
    front.sort_unstable();
    Ok(front)
}

pub fn pareto_front(points: &[Vec<f64>], senses: &[Sense]) -> Result<ParetoFront> {
    let idx = pareto_indices(points, senses)?;
    Ok(ParetoFront { points: idx.into_iter().map(|i| points[i].clone()).collect() })
}

/// Relative gap of `approx` behind `reference`:
/// `max(0, max_j (approx_j − ref_j) / ref_j)` over minimized, positive values.
pub fn delta(reference: &[f64], approx: &[f64]) -> f64 {
    reference.iter().zip(approx).map(|(&t, &l)| (l - t) / t).fold(0.0, f64::max)
}

/// Average distance from reference set: the mean over `reference` of the
/// smallest [`delta`] to any point of `approx`. Values must be minimized and
/// strictly positive.
pub fn adrs(reference: &ParetoFront, approx: &ParetoFront) -> Result<f64> {
    if reference.points.is_empty() || approx.points.is_empty() {
        return Err(Error::Metrics("ADRS needs non-empty fronts".into()));
    }
    if let Some(v) = reference.points.iter().flatten().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Metrics(format!("ADRS reference value {} is not strictly positive", v)));
    }
    let total: f64 =
        reference.points.iter().map(|t| approx.points.iter().map(|l| delta(t, l)).fold(f64::INFINITY, f64::min)).sum();
    Ok(total / reference.points.len() as f64)
}

/// Converts objective vectors to minimized, strictly positive form. Minimized
/// objectives pass through; maximized ones become `−v + 1 + |min(−v)|`, with the
/// minimum taken over all points of all given sets.
pub fn to_positive_minimized(sets: &[&[Vec<f64>]], senses: &[Sense]) -> Vec<Vec<Vec<f64>>> {
    let shifts: Vec<f64> = senses
        .iter()
        .enumerate()
        .map(|(j, s)| match s {
            Sense::Minimize => 0.0,
            Sense::Maximize => {
                let lo = sets.iter().flat_map(|set| set.iter()).map(|p| -p[j]).fold(f64::INFINITY, f64::min);
                1.0 + lo.abs()
            }
        })
        .collect();
    sets.iter()
        .map(|set| {
            set.iter()
                .map(|p| {
                    p.iter()
                        .zip(senses)
                        .zip(&shifts)
                        .map(|((&v, s), &sh)| match s {
                            Sense::Minimize => v,
                            Sense::Maximize => -v + sh,
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Precomputed true Pareto front of a complete dataset for ADRS queries.
#[derive(Debug, Clone)]
pub struct FrontTable {
    objectives: Vec<usize>,
    senses: Vec<Sense>,
    true_front: Vec<Vec<f64>>,
    maximized_min: Vec<f64>,
}

impl FrontTable {
    /// `objectives` are `(dataset column, sense)` pairs.
    pub fn new(truth: &Dataset, objectives: &[(usize, Sense)]) -> Result<Self> {
        if !truth.is_complete() {
            return Err(Error::Metrics("ADRS needs a complete ground-truth dataset".into()));
        }
        let cols: Vec<usize> = objectives.iter().map(|o| o.0).collect();
        let senses: Vec<Sense> = objectives.iter().map(|o| o.1).collect();
        let all: Vec<Vec<f64>> = truth.rows().map(|(_, v)| cols.iter().map(|&j| v[j]).collect()).collect();
        // shift for maximized objectives is fixed by the whole space
        let maximized_min: Vec<f64> =
            (0..cols.len()).map(|j| all.iter().map(|p| -p[j]).fold(f64::INFINITY, f64::min)).collect();
        let front = pareto_front(&all, &senses)?;
        Ok(FrontTable { objectives: cols, senses, true_front: front.points, maximized_min })
    }

    fn convert(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.senses)
            .zip(&self.maximized_min)
            .map(|((&v, s), &lo)| match s {
                Sense::Minimize => v,
                Sense::Maximize => -v + 1.0 + lo.abs(),
            })
            .collect()
    }

    pub fn true_front(&self) -> &[Vec<f64>] {
        &self.true_front
    }

    /// ADRS of the front of the given points (raw objective values).
    pub fn adrs_of(&self, points: &[Vec<f64>]) -> Result<f64> {
        let approx = pareto_front(points, &self.senses)?;
        let t = ParetoFront { points: self.true_front.iter().map(|p| self.convert(p)).collect() };
        let l = ParetoFront { points: approx.points.iter().map(|p| self.convert(p)).collect() };
        adrs(&t, &l)
    }

    /// ADRS of a run's feasible samples, valued by the ground truth.
    pub fn adrs_of_log(&self, log: &RunLog, truth: &Dataset) -> Result<f64> {
        let mut pts = Vec::new();
        for r in log.feasible() {
            let v = truth.get(&r.sample).ok_or_else(|| {
                Error::Metrics(format!("logged sample {} is missing from the ground truth", r.sample))
            })?;
            pts.push(self.objectives.iter().map(|&j| v[j]).collect());
        }
        if pts.is_empty() {
            return Err(Error::Metrics("run log has no feasible evaluation".into()));
        }
        self.adrs_of(&pts)
    }
}

/// ADRS of a run against the complete ground truth over the run's objectives.
pub fn run_adrs(log: &RunLog, truth: &Dataset) -> Result<f64> {
    let objs = log
        .config
        .objectives
        .iter()
        .map(|o| Ok((truth.objective_index(&o.name).map_err(|e| Error::Metrics(e.to_string()))?, o.sense)))
        .collect::<Result<Vec<_>>>()?;
    FrontTable::new(truth, &objs)?.adrs_of_log(log, truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Mean and population standard deviation.
pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Metrics("nothing to summarize".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(Summary { mean, std: var.sqrt(), count: values.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub best_rank: Summary,
    /// Present for runs with two or more objectives.
    pub adrs: Option<Summary>,
}

/// Aggregates best rank (first objective) and, for multi-objective runs, ADRS
/// across trials that share one objective configuration.
pub fn summarize_trials(logs: &[RunLog], truth: &Dataset) -> Result<TrialSummary> {
    let first = logs.first().ok_or_else(|| Error::Metrics("no run logs".into()))?;
    if logs.iter().any(|l| l.config.objectives != first.config.objectives) {
        return Err(Error::Metrics("run logs use different objective configurations".into()));
    }
    let obj = &first.config.objectives[0];
    let (j, sense) = objective_of(first, truth, &obj.name)?;
    let table = RankTable::new(truth, j, sense)?;
    let ranks =
        logs.iter().map(|l| rank_of_best_with(l, truth, j, &table).map(|r| r as f64)).collect::<Result<Vec<_>>>()?;
    let adrs = if first.config.objectives.len() > 1 {
        let objs =
            first.config.objectives.iter().map(|o| objective_of(first, truth, &o.name)).collect::<Result<Vec<_>>>()?;
        let ft = FrontTable::new(truth, &objs)?;
        let vals = logs.iter().map(|l| ft.adrs_of_log(l, truth)).collect::<Result<Vec<_>>>()?;
        Some(summarize(&vals)?)
    } else {
        None
    };
    Ok(TrialSummary { best_rank: summarize(&ranks)?, adrs })
}
