//! Sampling strategies under a fixed evaluation budget.
//!
//! The clustered strategy proceeds in three phases:
//!
//! 1. *model-less*: `p` distinct clusters are drawn uniformly and one random
//!    member of each is evaluated; its label is copied to its whole cluster.
//! 2. *explore* (refinement iterations `1..=θ`): a surrogate is trained on the
//!    approximately labeled clusters and picks the best sample from clusters not
//!    yet represented; the pick's label is again copied to its cluster.
//! 3. *exploit*: a surrogate trained on true labels only picks the best sample
//!    among everything not yet evaluated.
//!
//! The baselines skip clustering: `p` uniform samples, then exploit only.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{apply_approx_labels, partition, ApproxLabelStore, ClusterKey, Partition};
use crate::error::{Error, Result};
use crate::harness::Evaluator;
use crate::importance::{importance_mask, ImportanceVector, MaskRule};
use crate::model::{BinaryMatrix, DepthSchedule, ForestParams, GbrtParams, Learner, Surrogate};
use crate::space::{ParameterSpace, Sample, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    BaselineRf,
    BaselineXgb,
    Fist,
    FistNoDyn,
    FistMlessOnly,
    FistRandImportance,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Random,
        Strategy::BaselineRf,
        Strategy::BaselineXgb,
        Strategy::Fist,
        Strategy::FistNoDyn,
        Strategy::FistMlessOnly,
        Strategy::FistRandImportance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::BaselineRf => "baseline_rf",
            Strategy::BaselineXgb => "baseline_xgb",
            Strategy::Fist => "fist",
            Strategy::FistNoDyn => "fist_no_dyn",
            Strategy::FistMlessOnly => "fist_mless_only",
            Strategy::FistRandImportance => "fist_rand_importance",
        }
    }

    /// Strategies that cluster the space by feature importance.
    pub fn uses_clusters(self) -> bool {
        matches!(self, Strategy::Fist | Strategy::FistNoDyn | Strategy::FistMlessOnly | Strategy::FistRandImportance)
    }

    /// Strategies that need a caller-supplied importance vector.
    pub fn needs_importance(self) -> bool {
        matches!(self, Strategy::Fist | Strategy::FistNoDyn | Strategy::FistMlessOnly)
    }

    fn explores(self) -> bool {
        matches!(self, Strategy::Fist | Strategy::FistNoDyn | Strategy::FistRandImportance)
    }

    fn dynamic_depth(self) -> bool {
        matches!(self, Strategy::Fist | Strategy::FistRandImportance)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{}`", s)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    ModelLess,
    Explore,
    Exploit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub name: String,
    pub sense: Sense,
}

impl ObjectiveSpec {
    pub fn new(name: impl Into<String>, sense: Sense) -> Self {
        ObjectiveSpec { name: name.into(), sense }
    }

    /// Parses `name:min` / `name:max`; a bare name minimizes.
    pub fn parse(s: &str) -> Result<Self> {
        match s.rsplit_once(':') {
            Some((name, sense)) if !name.is_empty() => Ok(ObjectiveSpec::new(name, Sense::parse(sense)?)),
            Some(_) => Err(Error::Config(format!("bad objective `{}`", s))),
            None if !s.is_empty() => Ok(ObjectiveSpec::new(s, Sense::Minimize)),
            None => Err(Error::Config("empty objective name".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub strategy: Strategy,
    /// Total evaluations `b`.
    pub budget: usize,
    /// Model-less evaluations `p`.
    pub initial: usize,
    /// Refinement iterations spent exploring unrepresented clusters.
    pub theta: usize,
    pub depth_init: usize,
    pub depth_final: usize,
    /// Samples chosen per refinement iteration.
    pub batch: usize,
    pub objectives: Vec<ObjectiveSpec>,
    pub seed: u64,
    pub mask_rule: MaskRule,
    pub gbrt: GbrtParams,
    pub forest: ForestParams,
}

impl TuneConfig {
    /// Defaults: `p = (b − 10) / 2`, `θ = 10`, depth 3 → 10, one sample per iteration.
    pub fn new(strategy: Strategy, budget: usize, objectives: Vec<ObjectiveSpec>, seed: u64) -> Self {
        TuneConfig {
            strategy,
            budget,
            initial: budget.saturating_sub(10) / 2,
            theta: 10,
            depth_init: 3,
            depth_final: 10,
            batch: 1,
            objectives,
            seed,
            mask_rule: MaskRule::Median,
            gbrt: GbrtParams::default(),
            forest: ForestParams::default(),
        }
    }

    pub fn senses(&self) -> Vec<Sense> {
        self.objectives.iter().map(|o| o.sense).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.objectives.is_empty() {
            return err("at least one objective is required".into());
        }
        let mut names = HashSet::new();
        if let Some(o) = self.objectives.iter().find(|o| !names.insert(o.name.as_str())) {
            return err(format!("objective `{}` listed twice", o.name));
        }
        if self.initial == 0 {
            return err("initial sample count p must be at least 1".into());
        }
        if self.initial >= self.budget {
            return err(format!("initial samples p={} must be below the budget b={}", self.initial, self.budget));
        }
        if self.theta > self.budget - self.initial {
            return err(format!(
                "theta={} exceeds the refinement budget b-p={}",
                self.theta,
                self.budget - self.initial
            ));
        }
        if self.batch == 0 {
            return err("batch size must be at least 1".into());
        }
        if self.depth_init == 0 || self.depth_init > self.depth_final {
            return err(format!("need 1 <= depth_init <= depth_final, got {}..{}", self.depth_init, self.depth_final));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Refinement iteration; 0 for model-less samples.
    pub iter: usize,
    pub phase: Phase,
    pub sample: Sample,
    /// Empty for infeasible samples.
    pub objectives: IndexMap<String, f64>,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub config: TuneConfig,
    /// Importance used to build clusters, if any.
    pub importance: Option<ImportanceVector>,
    pub records: Vec<EvalRecord>,
}

impl RunLog {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn feasible(&self) -> impl Iterator<Item = &EvalRecord> {
        self.records.iter().filter(|r| r.feasible)
    }
}

/// Mutable state of one tuning run.
pub struct ExploreState {
    space: ParameterSpace,
    objectives: Vec<ObjectiveSpec>,
    partition: Option<Partition>,
    store: ApproxLabelStore,
    failed_clusters: BTreeSet<ClusterKey>,
    completed: Vec<(Sample, Vec<f64>)>,
    evaluated: HashSet<u64>,
    records: Vec<EvalRecord>,
    rng: ChaCha8Rng,
}

impl ExploreState {
    pub fn new(
        space: &ParameterSpace,
        objectives: Vec<ObjectiveSpec>,
        partition: Option<Partition>,
        seed: u64,
    ) -> Self {
        ExploreState {
            space: space.clone(),
            objectives,
            partition,
            store: ApproxLabelStore::new(),
            failed_clusters: BTreeSet::new(),
            completed: Vec::new(),
            evaluated: HashSet::new(),
            records: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn partition(&self) -> Option<&Partition> {
        self.partition.as_ref()
    }

    pub fn store(&self) -> &ApproxLabelStore {
        &self.store
    }

    /// Feasible evaluated samples with their true labels.
    pub fn completed(&self) -> &[(Sample, Vec<f64>)] {
        &self.completed
    }

    pub fn records(&self) -> &[EvalRecord] {
        &self.records
    }

    pub fn evaluated_count(&self) -> usize {
        self.evaluated.len()
    }

    pub fn is_evaluated(&self, s: &Sample) -> bool {
        self.evaluated.contains(&self.space.index_of(s))
    }

    fn is_explored(&self, key: &ClusterKey) -> bool {
        self.store.contains(key) || self.failed_clusters.contains(key)
    }

    /// True if some cluster has neither a label nor a failed representative.
    pub fn has_unexplored(&self) -> bool {
        self.partition.as_ref().is_some_and(|p| ((self.store.len() + self.failed_clusters.len()) as u64) < p.len())
    }

    /// Records evaluation results in lexicographic sample order. During the
    /// model-less and explore phases each feasible label is copied to its
    /// whole cluster; an infeasible representative marks its cluster explored.
    pub fn commit(&mut self, phase: Phase, iter: usize, mut results: Vec<(Sample, Result<Vec<f64>>)>) -> Result<()> {
        results.sort_by(|a, b| a.0.cmp(&b.0));
        for (s, res) in results {
            let idx = self.space.index_of(&s);
            if !self.evaluated.insert(idx) {
                return Err(Error::Config(format!("sample {} evaluated twice", s)));
            }
            let labels = match res {
                Ok(v) if v.len() == self.objectives.len() && v.iter().all(|x| x.is_finite()) => Some(v),
                _ => None,
            };
            let clustered_phase = matches!(phase, Phase::ModelLess | Phase::Explore);
            if let (Some(p), true) = (&self.partition, clustered_phase) {
                match &labels {
                    Some(v) => {
                        apply_approx_labels(&mut self.store, p, &s, v.clone())?;
                    }
                    None => {
                        self.failed_clusters.insert(p.key_of(&s));
                    }
                }
            }
            let objectives = match &labels {
                Some(v) => self.objectives.iter().map(|o| o.name.clone()).zip(v.iter().copied()).collect(),
                None => IndexMap::new(),
            };
            self.records.push(EvalRecord { iter, phase, sample: s.clone(), objectives, feasible: labels.is_some() });
            if let Some(v) = labels {
                self.completed.push((s, v));
            }
        }
        Ok(())
    }

    fn fit_models<'r>(
        &mut self,
        learner: &dyn Learner,
        depth: usize,
        rows: impl Iterator<Item = (Sample, &'r [f64])>,
    ) -> Result<Vec<Box<dyn Surrogate>>> {
        let k = self.objectives.len();
        let mut x = BinaryMatrix::new(self.space.one_hot_width());
        let mut ys: Vec<Vec<f64>> = vec![Vec::new(); k];
        let mut buf = Vec::new();
        for (s, label) in rows {
            self.space.fill_active_columns(&s, &mut buf);
            x.push_row(&buf);
            for (y, &v) in ys.iter_mut().zip(label) {
                y.push(v);
            }
        }
        ys.iter()
            .map(|y| {
                let seed = self.rng.gen();
                learner.fit(&x, y, depth, seed)
            })
            .collect()
    }

    /// Candidates ordered best first (acquisition score, then lexicographic).
    fn rank(&mut self, models: &[Box<dyn Surrogate>], candidates: Vec<u64>) -> Result<Vec<u64>> {
        let mut preds: Vec<Vec<f64>> = vec![Vec::with_capacity(candidates.len()); models.len()];
        let mut buf = Vec::new();
        for &c in &candidates {
            let s = self.space.sample_at(c);
            self.space.fill_active_columns(&s, &mut buf);
            for (p, m) in preds.iter_mut().zip(models) {
                p.push(m.predict_active(&buf));
            }
        }
        let senses: Vec<Sense> = self.objectives.iter().map(|o| o.sense).collect();
        let weights = (senses.len() > 1).then(|| draw_weights(senses.len(), &mut self.rng));
        let scores = acquisition(&preds, &senses, weights.as_deref())?;
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(candidates[a].cmp(&candidates[b])));
        Ok(order.into_iter().map(|i| candidates[i]).collect())
    }
}

/// Draws `p` distinct clusters uniformly and one uniform member from each.
pub fn model_less_sample<R: Rng + ?Sized>(partition: &Partition, p: usize, rng: &mut R) -> Result<Vec<Sample>> {
    if p as u64 > partition.len() {
        return Err(Error::Config(format!(
            "{} initial samples requested but the mask yields only {} clusters; mark more features as important \
             (e.g. a larger top_k) to get more clusters",
            p,
            partition.len()
        )));
    }
    let ids = index::sample(rng, partition.len() as usize, p);
    Ok(ids
        .into_iter()
        .map(|id| {
            let key = partition.key_at(id as u64);
            partition.random_member(&key, rng)
        })
        .collect())
}

/// Exploration step: train on the approximately labeled clusters and pick up
/// to `k` samples from distinct unexplored clusters.
pub fn refine_step_explore(
    state: &mut ExploreState,
    learner: &dyn Learner,
    depth: usize,
    k: usize,
) -> Result<Vec<Sample>> {
    let partition =
        state.partition.clone().ok_or_else(|| Error::Config("exploration requires a cluster partition".into()))?;
    let mut candidates = Vec::new();
    let mut keys = Vec::new();
    for key in partition.keys() {
        if !state.is_explored(&key) {
            keys.push(key);
        }
    }
    if keys.is_empty() || k == 0 {
        return Ok(Vec::new());
    }
    if state.store.is_empty() {
        // nothing to learn from: uniform picks among unexplored clusters
        let picks: Vec<&ClusterKey> = keys.choose_multiple(&mut state.rng, k).collect();
        let mut out: Vec<Sample> = picks.into_iter().map(|key| partition.random_member(key, &mut state.rng)).collect();
        out.sort();
        return Ok(out);
    }
    for key in &keys {
        candidates.extend(partition.members(key).map(|s| state.space.index_of(&s)));
    }
    let store = std::mem::take(&mut state.store);
    let fitted = state.fit_models(learner, depth, store.virtual_rows(&partition));
    state.store = store;
    let models = fitted?;
    let ranked = state.rank(&models, candidates)?;
    let mut taken = HashSet::new();
    let mut out = Vec::with_capacity(k);
    for idx in ranked {
        let s = state.space.sample_at(idx);
        if taken.insert(partition.key_of(&s)) {
            out.push(s);
            if out.len() == k {
                break;
            }
        }
    }
    Ok(out)
}

/// Exploitation step: train on true labels only and pick the `k` best
/// unevaluated samples, regardless of cluster.
pub fn refine_step_exploit(
    state: &mut ExploreState,
    learner: &dyn Learner,
    depth: usize,
    k: usize,
) -> Result<Vec<Sample>> {
    let size = state.space.size();
    let candidates: Vec<u64> = (0..size).filter(|i| !state.evaluated.contains(i)).collect();
    if candidates.is_empty() || k == 0 {
        return Ok(Vec::new());
    }
    if state.completed.is_empty() {
        let mut out: Vec<Sample> =
            candidates.choose_multiple(&mut state.rng, k).map(|&i| state.space.sample_at(i)).collect();
        out.sort();
        return Ok(out);
    }
    let completed = std::mem::take(&mut state.completed);
    let fitted = state.fit_models(learner, depth, completed.iter().map(|(s, l)| (s.clone(), l.as_slice())));
    state.completed = completed;
    let models = fitted?;
    let ranked = state.rank(&models, candidates)?;
    Ok(ranked.into_iter().take(k).map(|i| state.space.sample_at(i)).collect())
}

/// Scores candidates; lower is better.
///
/// `predictions[j][c]` is objective `j`'s prediction for candidate `c`. A single
/// objective scores its sense-adjusted prediction. Several objectives use a
/// weighted Chebyshev scalarization of predictions min-max normalized over the
/// candidate pool: `max_j w_j · norm_j(c)`. Missing weights mean equal weights.
pub fn acquisition(predictions: &[Vec<f64>], senses: &[Sense], weights: Option<&[f64]>) -> Result<Vec<f64>> {
    if predictions.is_empty() || predictions[0].is_empty() {
        return Err(Error::Config("empty candidate pool".into()));
    }
    if predictions.len() != senses.len() {
        return Err(Error::Config(format!("{} prediction sets for {} objectives", predictions.len(), senses.len())));
    }
    let n = predictions[0].len();
    if predictions.iter().any(|p| p.len() != n) {
        return Err(Error::Config("prediction sets differ in length".into()));
    }
    if predictions.len() == 1 {
        return Ok(predictions[0].iter().map(|&v| senses[0].to_min(v)).collect());
    }
    let equal = vec![1.0 / senses.len() as f64; senses.len()];
    let w = weights.unwrap_or(&equal);
    if w.len() != senses.len() {
        return Err(Error::Config("weight count differs from objective count".into()));
    }
    let mut scores = vec![f64::NEG_INFINITY; n];
    for ((p, &sense), &wj) in predictions.iter().zip(senses).zip(w) {
        let lo = p.iter().map(|&v| sense.to_min(v)).fold(f64::INFINITY, f64::min);
        let hi = p.iter().map(|&v| sense.to_min(v)).fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for (s, &v) in scores.iter_mut().zip(p) {
            let norm = if span > 0.0 { (sense.to_min(v) - lo) / span } else { 0.0 };
            *s = s.max(wj * norm);
        }
    }
    Ok(scores)
}

/// Uniform draw from the probability simplex.
pub fn draw_weights<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

fn evaluate_batch(
    evaluator: &dyn Evaluator,
    space: &ParameterSpace,
    samples: Vec<Sample>,
) -> Vec<(Sample, Result<Vec<f64>>)> {
    if samples.len() <= 1 {
        return samples
            .into_iter()
            .map(|s| {
                let r = evaluator.evaluate(space, &s);
                (s, r)
            })
            .collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = samples
            .into_iter()
            .map(|s| {
                scope.spawn(move || {
                    let r = evaluator.evaluate(space, &s);
                    (s, r)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluator thread panicked")).collect()
    })
}

/// Runs one tuning strategy end to end.
///
/// `importance` is required by `fist`, `fist_no_dyn` and `fist_mless_only`;
/// `fist_rand_importance` draws a random permutation instead. For several
/// objectives the caller passes the importance of the first objective.
pub fn run(
    space: &ParameterSpace,
    evaluator: &dyn Evaluator,
    config: &TuneConfig,
    importance: Option<&ImportanceVector>,
) -> Result<RunLog> {
    config.validate()?;
    let strategy = config.strategy;
    let budget = config.budget.min(space.size() as usize);
    let initial = config.initial.min(budget);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let importance = match strategy {
        Strategy::FistRandImportance => {
            let mut perm: Vec<f64> = (1..=space.dims()).map(|v| v as f64).collect();
            perm.shuffle(&mut rng);
            Some(ImportanceVector::new(perm)?)
        }
        s if s.needs_importance() => {
            let imp =
                importance.ok_or_else(|| Error::Config(format!("strategy {} needs a feature importance vector", s)))?;
            if imp.len() != space.dims() {
                return Err(Error::Config(format!(
                    "importance has {} entries, space has {} features",
                    imp.len(),
                    space.dims()
                )));
            }
            Some(imp.clone())
        }
        _ => None,
    };
    let partition = match &importance {
        Some(imp) => Some(partition(space, &importance_mask(imp, config.mask_rule)?)?),
        None => None,
    };

    let state_seed: u64 = rng.gen();
    let mut state = ExploreState::new(space, config.objectives.clone(), partition.clone(), state_seed);

    // model-less phase
    let initial_samples = match &partition {
        Some(p) => model_less_sample(p, initial, &mut rng)?,
        None if strategy == Strategy::Random => {
            // all b samples are drawn up front; the first p count as model-less
            let picks: Vec<Sample> = index::sample(&mut rng, space.size() as usize, budget)
                .into_iter()
                .map(|i| space.sample_at(i as u64))
                .collect();
            let (head, tail) = picks.split_at(initial);
            let results = evaluate_batch(evaluator, space, head.to_vec());
            state.commit(Phase::ModelLess, 0, results)?;
            for (i, chunk) in tail.chunks(config.batch).enumerate() {
                let results = evaluate_batch(evaluator, space, chunk.to_vec());
                state.commit(Phase::Exploit, i + 1, results)?;
            }
            return Ok(RunLog { config: config.clone(), importance, records: state.records });
        }
        None => index::sample(&mut rng, space.size() as usize, initial)
            .into_iter()
            .map(|i| space.sample_at(i as u64))
            .collect(),
    };
    let results = evaluate_batch(evaluator, space, initial_samples);
    state.commit(Phase::ModelLess, 0, results)?;

    let learner: &dyn Learner = match strategy {
        Strategy::BaselineRf => &config.forest,
        _ => &config.gbrt,
    };
    let refinement = budget - state.evaluated_count();
    let total_iters = refinement.div_ceil(config.batch);
    if total_iters == 0 {
        return Ok(RunLog { config: config.clone(), importance, records: state.records });
    }
    let schedule = DepthSchedule::new(config.depth_init, config.depth_final, total_iters)?;
    for i in 1..=total_iters {
        let take = config.batch.min(budget - state.evaluated_count());
        if take == 0 {
            break;
        }
        let depth = if strategy.dynamic_depth() { schedule.depth_at(i)? } else { config.depth_final };
        let exploring = strategy.explores() && i <= config.theta && state.has_unexplored();
        let (phase, chosen) = if exploring {
            (Phase::Explore, refine_step_explore(&mut state, learner, depth, take)?)
        } else {
            (Phase::Exploit, refine_step_exploit(&mut state, learner, depth, take)?)
        };
        if chosen.is_empty() {
            break;
        }
        let results = evaluate_batch(evaluator, space, chosen);
        state.commit(phase, i, results)?;
    }
    Ok(RunLog { config: config.clone(), importance, records: state.records })
}
