//! Regression trees over one-hot encoded samples, gradient boosting, random
//! forests and the depth schedule used during refinement.
//!
//! Every input column is binary, so a split is "column is 0" (left) versus
//! "column is 1" (right), i.e. a fixed threshold of 0.5.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{ParameterSpace, Sample};

/// Sparse binary design matrix: each row stores its set columns, ascending.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinaryMatrix {
    n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
}

impl BinaryMatrix {
    pub fn new(n_cols: usize) -> Self {
        BinaryMatrix { n_cols, row_ptr: vec![0], cols: Vec::new() }
    }

    /// Builds from dense rows whose entries are all exactly 0 or 1.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut m = BinaryMatrix::new(n_cols);
        let mut active = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(Error::Model(format!("row {} has {} columns, expected {}", i, r.len(), n_cols)));
            }
            active.clear();
            for (j, &x) in r.iter().enumerate() {
                if x == 1.0 {
                    active.push(j as u32);
                } else if x != 0.0 {
                    return Err(Error::Model(format!("row {} column {} is {}, expected 0 or 1", i, j, x)));
                }
            }
            m.push_row(&active);
        }
        Ok(m)
    }

    pub fn from_samples<'a>(space: &ParameterSpace, samples: impl IntoIterator<Item = &'a Sample>) -> Self {
        let mut m = BinaryMatrix::new(space.one_hot_width());
        let mut buf = Vec::new();
        for s in samples {
            space.fill_active_columns(s, &mut buf);
            m.push_row(&buf);
        }
        m
    }

    /// Appends a row given by its set columns (ascending, in range).
    pub fn push_row(&mut self, active: &[u32]) {
        debug_assert!(active.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(active.iter().all(|&c| (c as usize) < self.n_cols));
        self.cols.extend_from_slice(active);
        self.row_ptr.push(self.cols.len());
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }
}

#[inline]
fn has_col(active: &[u32], col: u32) -> bool {
    active.binary_search(&col).is_ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64, rows: usize },
    Split { column: u32, gain: f64, left: u32, right: u32, rows: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    n_cols: usize,
    max_depth: usize,
    min_leaf: usize,
}

impl RegressionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Prediction for a row given by its set columns.
    pub fn predict_active(&self, active: &[u32]) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split { column, left, right, .. } => {
                    i = if has_col(active, column) { right } else { left } as usize;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { value, rows } => Some((value, rows)),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub lambda: f64,
}

/// Exact greedy second-order tree construction.
///
/// A node is split on the column with the largest gain
/// `½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)]` (lowest column on ties) when that
/// gain is positive and both children keep at least `min_leaf` rows. Leaves
/// hold `−G/(H+λ)`.
///
/// When no column has positive gain but the node's gradients still differ, the
/// lowest column that separates the rows is used anyway: such a split leaves
/// predictions unchanged and lets deeper levels resolve interactions (e.g.
/// XOR-like targets) that no single column reveals.
pub fn fit_tree(x: &BinaryMatrix, grad: &[f64], hess: &[f64], params: &TreeParams) -> Result<RegressionTree> {
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    fit_tree_rows(x, grad, hess, params, rows, None)
}

fn fit_tree_rows(
    x: &BinaryMatrix,
    grad: &[f64],
    hess: &[f64],
    params: &TreeParams,
    mut rows: Vec<usize>,
    column_sampling: Option<(ChaCha8Rng, usize)>,
) -> Result<RegressionTree> {
    if x.n_rows() == 0 || rows.is_empty() {
        return Err(Error::Model("cannot fit a tree on an empty training set".into()));
    }
    if grad.len() != x.n_rows() || hess.len() != x.n_rows() {
        return Err(Error::Model(format!(
            "{} rows but {} gradients and {} hessians",
            x.n_rows(),
            grad.len(),
            hess.len()
        )));
    }
    if params.min_leaf == 0 || params.lambda.is_nan() || params.lambda < 0.0 {
        return Err(Error::Model("tree parameters need min_leaf >= 1 and lambda >= 0".into()));
    }
    let mut b = TreeBuilder {
        x,
        grad,
        hess,
        params,
        column_sampling,
        nodes: Vec::new(),
        g_col: vec![0.0; x.n_cols()],
        h_col: vec![0.0; x.n_cols()],
        n_col: vec![0; x.n_cols()],
    };
    b.build(&mut rows, 0);
    Ok(RegressionTree { nodes: b.nodes, n_cols: x.n_cols(), max_depth: params.max_depth, min_leaf: params.min_leaf })
}

struct TreeBuilder<'a> {
    x: &'a BinaryMatrix,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a TreeParams,
    column_sampling: Option<(ChaCha8Rng, usize)>,
    nodes: Vec<Node>,
    g_col: Vec<f64>,
    h_col: Vec<f64>,
    n_col: Vec<usize>,
}

impl TreeBuilder<'_> {
    fn build(&mut self, rows: &mut [usize], depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let lambda = self.params.lambda;
        let (mut g, mut h) = (0.0, 0.0);
        let (mut g_min, mut g_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &r in rows.iter() {
            g += self.grad[r];
            h += self.hess[r];
            g_min = g_min.min(self.grad[r]);
            g_max = g_max.max(self.grad[r]);
        }
        let n = rows.len();
        let leaf = Node::Leaf { value: leaf_value(g, h, lambda), rows: n };
        self.nodes.push(leaf);
        if depth >= self.params.max_depth || n < 2 * self.params.min_leaf || g_min == g_max {
            return id;
        }

        self.g_col.iter_mut().for_each(|v| *v = 0.0);
        self.h_col.iter_mut().for_each(|v| *v = 0.0);
        self.n_col.iter_mut().for_each(|v| *v = 0);
        for &r in rows.iter() {
            for &c in self.x.row(r) {
                let c = c as usize;
                self.g_col[c] += self.grad[r];
                self.h_col[c] += self.hess[r];
                self.n_col[c] += 1;
            }
        }

        let candidates: Vec<usize> = match &mut self.column_sampling {
            None => (0..self.x.n_cols()).collect(),
            Some((rng, k)) => {
                let mut c = index::sample(rng, self.x.n_cols(), *k).into_vec();
                c.sort_unstable();
                c
            }
        };

        let parent = score(g, h, lambda);
        let min_leaf = self.params.min_leaf;
        let mut best: Option<(usize, f64)> = None;
        let mut fallback: Option<usize> = None;
        for &c in &candidates {
            let n_r = self.n_col[c];
            let n_l = n - n_r;
            if n_r < min_leaf || n_l < min_leaf {
                continue;
            }
            fallback.get_or_insert(c);
            let (g_r, h_r) = (self.g_col[c], self.h_col[c]);
            let (s_l, s_r) = (score(g - g_r, h - h_r, lambda), score(g_r, h_r, lambda));
            let gain = 0.5 * (s_l + s_r - parent);
            let tol = 1e-12 * (s_l.abs() + s_r.abs() + parent.abs());
            // gains within rounding of the incumbent are ties; the lower column keeps it
            if gain > tol && best.is_none_or(|(_, bg)| gain > bg + 1e-12 * bg.abs()) {
                best = Some((c, gain));
            }
        }
        let (column, gain) = match (best, fallback) {
            (Some(b), _) => b,
            (None, Some(c)) => (c, 0.0),
            (None, None) => return id,
        };

        let column = column as u32;
        let x = self.x;
        let mut split = 0;
        for i in 0..rows.len() {
            if !has_col(x.row(rows[i]), column) {
                rows.swap(i, split);
                split += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(split);
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        self.nodes[id as usize] = Node::Split { column, gain, left, right, rows: n };
        id
    }
}

#[inline]
fn score(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d > 0.0 {
        g * g / d
    } else {
        0.0
    }
}

#[inline]
fn leaf_value(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d > 0.0 {
        -g / d
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbrtParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
    pub min_leaf: usize,
}

impl Default for GbrtParams {
    fn default() -> Self {
        GbrtParams { rounds: 50, learning_rate: 0.1, max_depth: 10, lambda: 1.0, min_leaf: 1 }
    }
}

/// Boosted ensemble: `base_score + η·Σ tree(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrtEnsemble {
    pub base_score: f64,
    pub learning_rate: f64,
    pub lambda: f64,
    pub trees: Vec<RegressionTree>,
    n_cols: usize,
}

impl GbrtEnsemble {
    pub fn predict_active(&self, active: &[u32]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict_active(active)).sum::<f64>()
    }
}

/// Squared-error boosting: round `r` fits a tree to `g = prediction − y`, `h = 1`.
pub fn fit_gbrt(x: &BinaryMatrix, y: &[f64], params: &GbrtParams) -> Result<GbrtEnsemble> {
    if x.n_rows() == 0 {
        return Err(Error::Model("cannot fit an ensemble on an empty training set".into()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::Model(format!("{} rows but {} targets", x.n_rows(), y.len())));
    }
    if params.rounds == 0 || params.learning_rate.is_nan() || params.learning_rate <= 0.0 {
        return Err(Error::Model("boosting needs rounds >= 1 and learning_rate > 0".into()));
    }
    let base_score = y.iter().sum::<f64>() / y.len() as f64;
    let tree_params = TreeParams { max_depth: params.max_depth, min_leaf: params.min_leaf, lambda: params.lambda };
    let mut pred = vec![base_score; y.len()];
    let hess = vec![1.0; y.len()];
    let mut grad = vec![0.0; y.len()];
    let mut trees = Vec::with_capacity(params.rounds);
    for _ in 0..params.rounds {
        for ((g, p), t) in grad.iter_mut().zip(&pred).zip(y) {
            *g = p - t;
        }
        let tree = fit_tree(x, &grad, &hess, &tree_params)?;
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict_active(x.row(i));
        }
        trees.push(tree);
    }
    Ok(GbrtEnsemble {
        base_score,
        learning_rate: params.learning_rate,
        lambda: params.lambda,
        trees,
        n_cols: x.n_cols(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub feature_frac: f64,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 20, max_depth: 10, min_leaf: 1, feature_frac: 1.0 / 3.0, bootstrap: true }
    }
}

/// A forest member: an SSE regression tree fitted to targets centered on
/// `offset` (the mean of its training rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestTree {
    pub offset: f64,
    pub tree: RegressionTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<ForestTree>,
    n_cols: usize,
}

impl RandomForest {
    pub fn predict_active(&self, active: &[u32]) -> f64 {
        self.trees.iter().map(|t| t.offset + t.tree.predict_active(active)).sum::<f64>() / self.trees.len() as f64
    }
}

pub fn fit_forest<R: Rng + ?Sized>(
    x: &BinaryMatrix,
    y: &[f64],
    params: &ForestParams,
    rng: &mut R,
) -> Result<RandomForest> {
    let n = x.n_rows();
    if n == 0 {
        return Err(Error::Model("cannot fit a forest on an empty training set".into()));
    }
    if y.len() != n {
        return Err(Error::Model(format!("{} rows but {} targets", n, y.len())));
    }
    if params.n_trees == 0 || !(params.feature_frac > 0.0 && params.feature_frac <= 1.0) {
        return Err(Error::Model("forest needs n_trees >= 1 and 0 < feature_frac <= 1".into()));
    }
    let per_split = ((params.feature_frac * x.n_cols() as f64).ceil() as usize).clamp(1, x.n_cols().max(1));
    let tree_params = TreeParams { max_depth: params.max_depth, min_leaf: params.min_leaf, lambda: 0.0 };
    let hess = vec![1.0; n];
    let mut grad = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let tree_seed: u64 = rng.gen();
        let mut tree_rng = ChaCha8Rng::seed_from_u64(tree_seed);
        let rows: Vec<usize> =
            if params.bootstrap { (0..n).map(|_| tree_rng.gen_range(0..n)).collect() } else { (0..n).collect() };
        let offset = rows.iter().map(|&r| y[r]).sum::<f64>() / n as f64;
        for (g, t) in grad.iter_mut().zip(y) {
            *g = offset - t;
        }
        let sampling = (per_split < x.n_cols()).then_some((tree_rng, per_split));
        let tree = fit_tree_rows(x, &grad, &hess, &tree_params, rows, sampling)?;
        trees.push(ForestTree { offset, tree });
    }
    Ok(RandomForest { trees, n_cols: x.n_cols() })
}

/// A fitted surrogate able to score one-hot rows.
pub trait Surrogate: Send + Sync {
    fn predict_active(&self, active: &[u32]) -> f64;

    fn n_cols(&self) -> usize;

    /// Prediction for a dense one-hot row.
    fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_cols() {
            return Err(Error::Model(format!("row has {} columns, model expects {}", x.len(), self.n_cols())));
        }
        let active: Vec<u32> = x.iter().enumerate().filter(|(_, &v)| v > 0.5).map(|(j, _)| j as u32).collect();
        Ok(self.predict_active(&active))
    }
}

impl Surrogate for RegressionTree {
    fn predict_active(&self, active: &[u32]) -> f64 {
        RegressionTree::predict_active(self, active)
    }
    fn n_cols(&self) -> usize {
        self.n_cols
    }
}

impl Surrogate for GbrtEnsemble {
    fn predict_active(&self, active: &[u32]) -> f64 {
        GbrtEnsemble::predict_active(self, active)
    }
    fn n_cols(&self) -> usize {
        self.n_cols
    }
}

impl Surrogate for RandomForest {
    fn predict_active(&self, active: &[u32]) -> f64 {
        RandomForest::predict_active(self, active)
    }
    fn n_cols(&self) -> usize {
        self.n_cols
    }
}

/// Fits a surrogate for a given maximum depth; randomized learners draw from
/// `seed` only.
pub trait Learner: Send + Sync {
    fn fit(&self, x: &BinaryMatrix, y: &[f64], max_depth: usize, seed: u64) -> Result<Box<dyn Surrogate>>;
}

impl Learner for GbrtParams {
    fn fit(&self, x: &BinaryMatrix, y: &[f64], max_depth: usize, _seed: u64) -> Result<Box<dyn Surrogate>> {
        let p = GbrtParams { max_depth, ..*self };
        Ok(Box::new(fit_gbrt(x, y, &p)?))
    }
}

impl Learner for ForestParams {
    fn fit(&self, x: &BinaryMatrix, y: &[f64], max_depth: usize, seed: u64) -> Result<Box<dyn Surrogate>> {
        let p = ForestParams { max_depth, ..*self };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Box::new(fit_forest(x, y, &p, &mut rng)?))
    }
}

/// Linear ramp of the maximum tree depth over the refinement iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthSchedule {
    pub d_init: usize,
    pub d_final: usize,
    pub total_iterations: usize,
}

impl DepthSchedule {
    pub fn new(d_init: usize, d_final: usize, total_iterations: usize) -> Result<Self> {
        if d_init == 0 || d_init > d_final {
            return Err(Error::Config(format!(
                "depth schedule needs 1 <= d_init <= d_final, got {}..{}",
                d_init, d_final
            )));
        }
        if total_iterations == 0 {
            return Err(Error::Config("depth schedule needs at least one iteration".into()));
        }
        Ok(DepthSchedule { d_init, d_final, total_iterations })
    }

    /// `round(d_init + (d_final − d_init)·(i−1)/(T−1))` for `i` in `1..=T`.
    pub fn depth_at(&self, i: usize) -> Result<usize> {
        let t = self.total_iterations;
        if i == 0 || i > t {
            return Err(Error::Config(format!("iteration {} outside 1..={}", i, t)));
        }
        if t == 1 {
            return Ok(self.d_final);
        }
        let span = (self.d_final - self.d_init) as f64;
        Ok((self.d_init as f64 + span * (i - 1) as f64 / (t - 1) as f64).round() as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> BinaryMatrix {
        let dense: Vec<Vec<f64>> =
            (0..rows).map(|_| (0..cols).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect()).collect();
        BinaryMatrix::from_dense(&dense).unwrap()
    }

    fn mse(pred: impl Fn(usize) -> f64, y: &[f64]) -> f64 {
        y.iter().enumerate().map(|(i, t)| (pred(i) - t).powi(2)).sum::<f64>() / y.len() as f64
    }

    #[test]
    fn matrix_validation() {
        assert!(BinaryMatrix::from_dense(&[vec![0.0, 0.5]]).is_err());
        assert!(BinaryMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0]]).is_err());
        let m = BinaryMatrix::from_dense(&[vec![0.0, 1.0, 1.0]]).unwrap();
        assert_eq!(m.row(0), &[1, 2]);
    }

    #[test]
    fn constant_target_gives_zero_leaf() {
        let x = BinaryMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let y = [4.2; 3];
        let base = y.iter().sum::<f64>() / 3.0;
        let g: Vec<f64> = y.iter().map(|t| base - t).collect();
        let t = fit_tree(&x, &g, &[1.0; 3], &TreeParams { max_depth: 5, min_leaf: 1, lambda: 0.0 }).unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert!(t.predict_active(&[0]).abs() < 1e-12);

        let e = fit_gbrt(&x, &y, &GbrtParams::default()).unwrap();
        for i in 0..3 {
            assert!((e.predict_active(x.row(i)) - 4.2).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let x = BinaryMatrix::new(3);
        assert!(fit_tree(&x, &[], &[], &TreeParams { max_depth: 2, min_leaf: 1, lambda: 0.0 }).is_err());
        assert!(fit_gbrt(&x, &[], &GbrtParams::default()).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(fit_forest(&x, &[], &ForestParams::default(), &mut rng).is_err());
    }

    #[test]
    fn xor_target_is_fit_exactly_at_full_depth() {
        let x = BinaryMatrix::from_dense(&[
            vec![1.0, 0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
        ])
        .unwrap();
        let y = [0.0, 1.0, 1.0, 0.0];
        let p = GbrtParams { rounds: 1, learning_rate: 1.0, max_depth: 64, lambda: 0.0, min_leaf: 1 };
        let e = fit_gbrt(&x, &y, &p).unwrap();
        assert!(mse(|i| e.predict_active(x.row(i)), &y) < 1e-24);
    }

    #[test]
    fn leaf_values_are_negative_mean_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_matrix(&mut rng, 40, 6);
        let g: Vec<f64> = (0..40).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let t = fit_tree(&x, &g, &[1.0; 40], &TreeParams { max_depth: 3, min_leaf: 1, lambda: 0.0 }).unwrap();
        assert!(t.depth() <= 3);
        // regroup rows by leaf via prediction and compare against -mean(g)
        let mut by_leaf: std::collections::BTreeMap<u64, Vec<f64>> = Default::default();
        for (i, &gi) in g.iter().enumerate() {
            by_leaf.entry(t.predict_active(x.row(i)).to_bits()).or_default().push(gi);
        }
        for (bits, gs) in by_leaf {
            let v = f64::from_bits(bits);
            let m = gs.iter().sum::<f64>() / gs.len() as f64;
            assert!((v + m).abs() < 1e-12);
        }
        for (_, rows) in t.leaves() {
            assert!(rows >= 1);
        }
    }

    #[test]
    fn min_leaf_is_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_matrix(&mut rng, 50, 8);
        let g: Vec<f64> = (0..50).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let t = fit_tree(&x, &g, &[1.0; 50], &TreeParams { max_depth: 10, min_leaf: 5, lambda: 1.0 }).unwrap();
        assert!(t.leaves().all(|(_, rows)| rows >= 5));
    }

    #[test]
    fn huge_lambda_collapses_to_base_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_matrix(&mut rng, 30, 6);
        let y: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..10.0)).collect();
        let mean = y.iter().sum::<f64>() / 30.0;
        let range = y.iter().cloned().fold(f64::MIN, f64::max) - y.iter().cloned().fold(f64::MAX, f64::min);
        let e = fit_gbrt(&x, &y, &GbrtParams { lambda: 1e9, ..GbrtParams::default() }).unwrap();
        for i in 0..30 {
            assert!((e.predict_active(x.row(i)) - mean).abs() < 1e-6 * range);
        }
    }

    #[test]
    fn zero_tree_ensemble_predicts_base_score() {
        let e = GbrtEnsemble { base_score: 2.5, learning_rate: 0.1, lambda: 1.0, trees: vec![], n_cols: 3 };
        assert_eq!(Surrogate::predict(&e, &[0.0, 1.0, 0.0]).unwrap(), 2.5);
        assert!(Surrogate::predict(&e, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn ensemble_equals_independent_walk() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 60, 7);
        let y: Vec<f64> = (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e = fit_gbrt(&x, &y, &GbrtParams { rounds: 7, max_depth: 3, ..GbrtParams::default() }).unwrap();

        // walk the serialized node arrays independently of predict_active
        fn walk(nodes: &[Node], dense: &[f64]) -> f64 {
            let mut i = 0;
            loop {
                match nodes[i] {
                    Node::Leaf { value, .. } => return value,
                    Node::Split { column, left, right, .. } => {
                        i = if dense[column as usize] > 0.5 { right as usize } else { left as usize }
                    }
                }
            }
        }
        for i in 0..60 {
            let mut dense = vec![0.0; 7];
            for &c in x.row(i) {
                dense[c as usize] = 1.0;
            }
            let mut expect = 0.0;
            for t in &e.trees {
                expect += walk(t.nodes(), &dense);
            }
            let expect = e.base_score + e.learning_rate * expect;
            assert!((Surrogate::predict(&e, &dense).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn forest_degenerate_case_matches_single_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_matrix(&mut rng, 25, 5);
        let y: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = ForestParams { n_trees: 1, max_depth: 4, min_leaf: 1, feature_frac: 1.0, bootstrap: false };
        let f = fit_forest(&x, &y, &p, &mut rng).unwrap();
        let mean = y.iter().sum::<f64>() / 25.0;
        let g: Vec<f64> = y.iter().map(|t| mean - t).collect();
        let t = fit_tree(&x, &g, &[1.0; 25], &TreeParams { max_depth: 4, min_leaf: 1, lambda: 0.0 }).unwrap();
        for i in 0..25 {
            assert_eq!(f.predict_active(x.row(i)), mean + t.predict_active(x.row(i)));
        }
    }

    #[test]
    fn forest_constant_target_and_identical_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_matrix(&mut rng, 20, 6);
        let f = fit_forest(&x, &[3.0; 20], &ForestParams::default(), &mut rng).unwrap();
        for i in 0..20 {
            assert!((f.predict_active(x.row(i)) - 3.0).abs() < 1e-12);
        }
        let y: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let single = fit_forest(&x, &y, &ForestParams { n_trees: 1, ..ForestParams::default() }, &mut rng).unwrap();
        let copies = RandomForest { trees: vec![single.trees[0].clone(); 4], n_cols: 6 };
        for i in 0..20 {
            assert!((copies.predict_active(x.row(i)) - single.predict_active(x.row(i))).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_models_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_matrix(&mut rng, 40, 9);
        let y: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = fit_forest(&x, &y, &ForestParams::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = fit_forest(&x, &y, &ForestParams::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = fit_gbrt(&x, &y, &GbrtParams::default()).unwrap();
        let d = fit_gbrt(&x, &y, &GbrtParams::default()).unwrap();
        assert_eq!(serde_json::to_string(&c).unwrap(), serde_json::to_string(&d).unwrap());
    }

    #[test]
    fn depth_schedule() {
        let s = DepthSchedule::new(3, 10, 50).unwrap();
        assert_eq!(s.depth_at(1).unwrap(), 3);
        assert_eq!(s.depth_at(50).unwrap(), 10);
        assert_eq!(s.depth_at(25).unwrap(), 6);
        assert!(s.depth_at(0).is_err());
        assert!(s.depth_at(51).is_err());
        assert_eq!(DepthSchedule::new(3, 10, 1).unwrap().depth_at(1).unwrap(), 10);
        assert!(DepthSchedule::new(5, 4, 3).is_err());
        assert!(DepthSchedule::new(0, 4, 3).is_err());
    }

    proptest! {
        #[test]
        fn boosting_never_increases_training_mse(
            seed in 0u64..1000,
            lambda in 0.0f64..5.0,
            eta in 0.05f64..1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_matrix(&mut rng, 30, 6);
            let y: Vec<f64> = (0..30).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let e = fit_gbrt(&x, &y, &GbrtParams { rounds: 12, learning_rate: eta, max_depth: 3, lambda, min_leaf: 1 }).unwrap();
            let mut prev = f64::INFINITY;
            for r in 0..=e.trees.len() {
                let partial = |i: usize| {
                    e.base_score + eta * e.trees[..r].iter().map(|t| t.predict_active(x.row(i))).sum::<f64>()
                };
                let m = mse(partial, &y);
                prop_assert!(m <= prev + 1e-12);
                prev = m;
            }
        }
    }
}
