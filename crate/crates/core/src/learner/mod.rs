//! Gradient-boosted decision trees for binary classification.
//!
//! Logistic loss with per-sample weights, second-order leaf values with L2
//! regularization, leaf-wise (best-first) growth, exact split search over
//! presorted feature columns, per-tree feature sampling and early stopping
//! on validation RMSE of the predicted probabilities.

mod model_io;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vsm::{grid_manifest, PairFeatureVector};

pub use model_io::{read_model, write_model};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("no-positive-samples: group {0} has no positive labels")]
    NoPositiveSamples(String),
    #[error("untrainable dataset: {0}")]
    Untrainable(String),
    #[error("feature-grid-mismatch: model expects {expected} features named differently from the input")]
    FeatureGridMismatch { expected: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Iteration cap.
    pub n_estimators: usize,
    pub num_leaves: usize,
    pub feature_fraction: f64,
    /// 0 disables early stopping.
    pub early_stopping_rounds: usize,
    /// L2 regularization on leaf values.
    pub lambda: f64,
    /// Minimum sum of sample weights in a leaf.
    pub min_weight_in_leaf: f64,
    pub min_sum_hessian_in_leaf: f64,
    /// `None` leaves depth bounded only by `num_leaves`.
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl TrainConfig {
    /// 100-iteration cap.
    pub fn quick() -> Self {
        TrainConfig {
            learning_rate: 0.03,
            n_estimators: 100,
            num_leaves: 31,
            feature_fraction: 0.08,
            early_stopping_rounds: 10,
            lambda: 1.0,
            min_weight_in_leaf: 20.0,
            min_sum_hessian_in_leaf: 1e-3,
            max_depth: None,
            seed: 0,
        }
    }

    /// 10000-iteration cap, relying on early stopping.
    pub fn faithful() -> Self {
        TrainConfig { n_estimators: 10_000, ..Self::quick() }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if self.num_leaves < 2 {
            return bad("num_leaves must be at least 2");
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return bad("feature_fraction must be in (0, 1]");
        }
        if !(self.lambda >= 0.0 && self.min_sum_hessian_in_leaf >= 0.0 && self.min_weight_in_leaf >= 0.0) {
            return bad("lambda and the leaf minimums must be non-negative");
        }
        Ok(())
    }

    /// Features sampled per tree: `ceil(fraction * n)`, at least 1.
    pub fn features_per_tree(&self, n_features: usize) -> usize {
        ((self.feature_fraction * n_features as f64).ceil() as usize).clamp(1, n_features)
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::quick()
    }
}

/// Row-major feature matrix with labels, sample weights and group keys.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightedDataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    pub weights: Vec<f64>,
    pub groups: Vec<String>,
}

impl WeightedDataset {
    pub fn new(
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<bool>,
        weights: Vec<f64>,
        groups: Vec<String>,
    ) -> Result<Self, LearnError> {
        let n = rows.len();
        if labels.len() != n || weights.len() != n || groups.len() != n {
            return Err(LearnError::InvalidDataset("column lengths differ".into()));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != feature_names.len()) {
            return Err(LearnError::InvalidDataset(format!("row {r} has the wrong width")));
        }
        if let Some(r) = rows.iter().position(|r| r.iter().any(|x| !x.is_finite())) {
            return Err(LearnError::InvalidDataset(format!("row {r} has a non-finite feature")));
        }
        if let Some(r) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(LearnError::InvalidDataset(format!("row {r} has weight {}", weights[r])));
        }
        Ok(WeightedDataset { feature_names, rows, labels, weights, groups })
    }

    /// Grid-feature dataset with class weights computed per project.
    pub fn from_pairs(pairs: &[&PairFeatureVector]) -> Result<Self, LearnError> {
        let labels: Vec<bool> = pairs.iter().map(|p| p.label).collect();
        let groups: Vec<String> = pairs.iter().map(|p| p.project.clone()).collect();
        let weights = class_weights(&labels, &groups)?;
        Self::new(
            grid_manifest(),
            pairs.iter().map(|p| p.scores.clone()).collect(),
            labels,
            weights,
            groups,
        )
    }

    /// Unweighted variant, for validation and prediction sets.
    pub fn from_pairs_unweighted(pairs: &[&PairFeatureVector]) -> Self {
        WeightedDataset {
            feature_names: grid_manifest(),
            rows: pairs.iter().map(|p| p.scores.clone()).collect(),
            labels: pairs.iter().map(|p| p.label).collect(),
            weights: vec![1.0; pairs.len()],
            groups: pairs.iter().map(|p| p.project.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }
}

/// Per group: `freq = negatives / positives`, `weight = label * freq + 1`.
pub fn class_weights(labels: &[bool], groups: &[String]) -> Result<Vec<f64>, LearnError> {
    assert_eq!(labels.len(), groups.len(), "one group key per label");
    let mut counts: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for (l, g) in labels.iter().zip(groups) {
        let c = counts.entry(g).or_default();
        if *l {
            c.1 += 1;
        } else {
            c.0 += 1;
        }
    }
    if let Some((g, _)) = counts.iter().find(|(_, c)| c.1 == 0) {
        return Err(LearnError::NoPositiveSamples(g.to_string()));
    }
    Ok(labels
        .iter()
        .zip(groups)
        .map(|(l, g)| {
            let (neg, pos) = counts[g.as_str()];
            if *l {
                neg as f64 / pos as f64 + 1.0
            } else {
                1.0
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        /// Already multiplied by the learning rate.
        value: f64,
    },
    Split {
        feature: usize,
        /// Rows with `x <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
}

/// Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right, .. } => {
                    k = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedModel {
    pub config: TrainConfig,
    pub feature_names: Vec<String>,
    pub base_score: f64,
    /// Only these trees are kept; their count is the best iteration.
    pub trees: Vec<Tree>,
    pub best_iteration: usize,
    /// Iterations run before stopping, including those discarded.
    pub iterations_trained: usize,
    /// Validation RMSE after each trained iteration.
    pub valid_rmse: Vec<f64>,
    /// Set when no tree found a split.
    pub degenerate: bool,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl BoostedModel {
    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    /// Probability for one row; the width is trusted.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.raw_score(row))
    }

    pub fn predict(&self, feature_names: &[String], rows: &[Vec<f64>]) -> Result<Vec<f64>, LearnError> {
        if feature_names != self.feature_names.as_slice() {
            return Err(LearnError::FeatureGridMismatch { expected: self.feature_names.len() });
        }
        Ok(rows.iter().map(|r| self.predict_row(r)).collect())
    }

    pub fn predict_pairs(&self, pairs: &[&PairFeatureVector]) -> Result<Vec<f64>, LearnError> {
        if self.feature_names != grid_manifest() {
            return Err(LearnError::FeatureGridMismatch { expected: self.feature_names.len() });
        }
        Ok(pairs.iter().map(|p| self.predict_row(&p.scores)).collect())
    }

    /// Human-readable dump of every tree.
    pub fn dump(&self) -> String {
        let mut out = format!(
            "base_score={}\nbest_iteration={}\niterations_trained={}\ndegenerate={}\n",
            self.base_score, self.best_iteration, self.iterations_trained, self.degenerate
        );
        for (t, tree) in self.trees.iter().enumerate() {
            out.push_str(&format!("tree {t}\n"));
            dump_node(tree, 0, 1, &self.feature_names, &mut out);
        }
        out
    }
}

fn dump_node(tree: &Tree, k: usize, depth: usize, names: &[String], out: &mut String) {
    let pad = "  ".repeat(depth);
    match &tree.nodes[k] {
        Node::Leaf { value } => out.push_str(&format!("{pad}leaf {value}\n")),
        Node::Split { feature, threshold, left, right, gain } => {
            out.push_str(&format!("{pad}if {} <= {threshold} (gain {gain})\n", names[*feature]));
            dump_node(tree, *left, depth + 1, names, out);
            out.push_str(&format!("{pad}else\n"));
            dump_node(tree, *right, depth + 1, names, out);
        }
    }
}

/// Weighted RMSE of probabilities against 0/1 labels.
pub fn rmse(probabilities: &[f64], labels: &[bool], weights: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for ((p, l), w) in probabilities.iter().zip(labels).zip(weights) {
        let y = if *l { 1.0 } else { 0.0 };
        num += w * (p - y) * (p - y);
        den += w;
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// A leaf under construction: its rows, listed once per sampled feature in
/// ascending feature value.
struct OpenLeaf {
    node: usize,
    depth: usize,
    sorted: Vec<Vec<u32>>,
    g: f64,
    h: f64,
    w: f64,
    best: Option<Candidate>,
}

#[derive(Clone, Copy)]
struct Candidate {
    slot: usize,
    position: usize,
    threshold: f64,
    gain: f64,
}

struct Grower<'a> {
    cfg: &'a TrainConfig,
    columns: &'a [Vec<f64>],
    features: &'a [usize],
    grad: &'a [f64],
    hess: &'a [f64],
    weights: &'a [f64],
}

impl Grower<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.cfg.lambda)
    }

    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.cfg.lambda;
        if denom > 0.0 {
            -g / denom * self.cfg.learning_rate
        } else {
            0.0
        }
    }

    fn find_split(&self, leaf: &OpenLeaf) -> Option<Candidate> {
        let cfg = self.cfg;
        if cfg.max_depth.is_some_and(|d| leaf.depth >= d) {
            return None;
        }
        let n = leaf.sorted[0].len();
        if n < 2 || leaf.w < 2.0 * cfg.min_weight_in_leaf {
            return None;
        }
        let parent = self.score(leaf.g, leaf.h);
        let mut best: Option<Candidate> = None;
        for (slot, order) in leaf.sorted.iter().enumerate() {
            let col = &self.columns[self.features[slot]];
            let (mut gl, mut hl, mut wl) = (0.0, 0.0, 0.0);
            for k in 0..n - 1 {
                let r = order[k] as usize;
                gl += self.grad[r];
                hl += self.hess[r];
                wl += self.weights[r];
                if leaf.w - wl < cfg.min_weight_in_leaf {
                    break;
                }
                let (v, next) = (col[r], col[order[k + 1] as usize]);
                if v == next || wl < cfg.min_weight_in_leaf {
                    continue;
                }
                let (gr, hr) = (leaf.g - gl, leaf.h - hl);
                if hl < cfg.min_sum_hessian_in_leaf || hr < cfg.min_sum_hessian_in_leaf {
                    continue;
                }
                let gain = 0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent);
                if gain > MIN_GAIN && best.is_none_or(|b| gain > b.gain) {
                    best = Some(Candidate { slot, position: k + 1, threshold: midpoint(v, next), gain });
                }
            }
        }
        best
    }
}

/// Splits with gain at or below this are not taken.
pub const MIN_GAIN: f64 = 1e-12;

/// Threshold between two adjacent distinct values that keeps `lo` left and
/// `hi` right even when the midpoint rounds up to `hi`.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

fn grow_tree(grower: &Grower, presorted: &[Vec<u32>], members: &[u32]) -> Tree {
    let mut in_set = vec![false; grower.grad.len()];
    for &r in members {
        in_set[r as usize] = true;
    }
    let sorted: Vec<Vec<u32>> = grower
        .features
        .iter()
        .map(|&f| presorted[f].iter().copied().filter(|&r| in_set[r as usize]).collect())
        .collect();
    let g: f64 = members.iter().map(|&r| grower.grad[r as usize]).sum();
    let h: f64 = members.iter().map(|&r| grower.hess[r as usize]).sum();
    let w: f64 = members.iter().map(|&r| grower.weights[r as usize]).sum();

    let mut nodes = vec![Node::Leaf { value: grower.leaf_value(g, h) }];
    let mut open = vec![OpenLeaf { node: 0, depth: 0, sorted, g, h, w, best: None }];
    open[0].best = grower.find_split(&open[0]);

    while open.len() < grower.cfg.num_leaves {
        let mut pick: Option<usize> = None;
        for (i, leaf) in open.iter().enumerate() {
            if let Some(c) = leaf.best {
                if pick.is_none_or(|p| c.gain > open[p].best.unwrap().gain) {
                    pick = Some(i);
                }
            }
        }
        let Some(i) = pick else { break };
        let leaf = open.remove(i);
        let c = leaf.best.unwrap();
        let feature = grower.features[c.slot];
        let goes_left = &mut in_set;
        goes_left.iter_mut().for_each(|b| *b = false);
        let left_rows = &leaf.sorted[c.slot][..c.position];
        for &r in left_rows {
            goes_left[r as usize] = true;
        }
        let (gl, hl, wl) = left_rows.iter().fold((0.0, 0.0, 0.0), |(a, b, c), &r| {
            let r = r as usize;
            (a + grower.grad[r], b + grower.hess[r], c + grower.weights[r])
        });
        let (gr, hr, wr) = (leaf.g - gl, leaf.h - hl, leaf.w - wl);
        let (mut ls, mut rs) = (Vec::new(), Vec::new());
        for order in &leaf.sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = order.iter().partition(|&&r| goes_left[r as usize]);
            ls.push(l);
            rs.push(r);
        }
        let (li, ri) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf { value: grower.leaf_value(gl, hl) });
        nodes.push(Node::Leaf { value: grower.leaf_value(gr, hr) });
        nodes[leaf.node] = Node::Split { feature, threshold: c.threshold, left: li, right: ri, gain: c.gain };
        let mut left = OpenLeaf { node: li, depth: leaf.depth + 1, sorted: ls, g: gl, h: hl, w: wl, best: None };
        let mut right = OpenLeaf { node: ri, depth: leaf.depth + 1, sorted: rs, g: gr, h: hr, w: wr, best: None };
        left.best = grower.find_split(&left);
        right.best = grower.find_split(&right);
        open.insert(i, right);
        open.insert(i, left);
    }
    Tree { nodes }
}

/// Trains on `data`, monitoring RMSE on `valid` (may be empty).
pub fn train(data: &WeightedDataset, valid: &WeightedDataset, cfg: &TrainConfig) -> Result<BoostedModel, LearnError> {
    cfg.validate()?;
    let n = data.len();
    let positives = data.labels.iter().filter(|l| **l).count();
    if positives == 0 || positives == n {
        return Err(LearnError::Untrainable("both labels must be present".into()));
    }
    if !valid.is_empty() && valid.feature_names != data.feature_names {
        return Err(LearnError::FeatureGridMismatch { expected: data.n_features() });
    }
    let n_features = data.n_features();
    let y: Vec<f64> = data.labels.iter().map(|l| if *l { 1.0 } else { 0.0 }).collect();
    let w_sum: f64 = data.weights.iter().sum();
    let p0 = y.iter().zip(&data.weights).map(|(y, w)| y * w).sum::<f64>() / w_sum;
    let base_score = (p0 / (1.0 - p0)).ln();

    let columns: Vec<Vec<f64>> = (0..n_features).map(|f| data.rows.iter().map(|r| r[f]).collect()).collect();
    let presorted: Vec<Vec<u32>> = columns
        .iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            idx
        })
        .collect();
    let members: Vec<u32> = (0..n as u32).collect();
    let k = cfg.features_per_tree(n_features);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut raw = vec![base_score; n];
    let mut valid_raw = vec![base_score; valid.len()];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::new();
    let mut valid_rmse = Vec::new();
    let mut best = (f64::INFINITY, 0usize);

    for _ in 0..cfg.n_estimators {
        for i in 0..n {
            let p = sigmoid(raw[i]);
            grad[i] = data.weights[i] * (p - y[i]);
            hess[i] = data.weights[i] * p * (1.0 - p);
        }
        let features: Vec<usize> = if k == n_features {
            (0..n_features).collect()
        } else {
            let mut f = rand::seq::index::sample(&mut rng, n_features, k).into_vec();
            f.sort_unstable();
            f
        };
        let grower = Grower { cfg, columns: &columns, features: &features, grad: &grad, hess: &hess, weights: &data.weights };
        let tree = grow_tree(&grower, &presorted, &members);
        if tree.nodes.len() == 1 && k == n_features {
            // no feature can split; later trees would be identical
            break;
        }
        for (i, r) in data.rows.iter().enumerate() {
            raw[i] += tree.predict(r);
        }
        for (i, r) in valid.rows.iter().enumerate() {
            valid_raw[i] += tree.predict(r);
        }
        trees.push(tree);
        if !valid.is_empty() {
            let probs: Vec<f64> = valid_raw.iter().map(|r| sigmoid(*r)).collect();
            let e = rmse(&probs, &valid.labels, &valid.weights);
            valid_rmse.push(e);
            if e < best.0 {
                best = (e, trees.len());
            }
            if cfg.early_stopping_rounds > 0 && trees.len() - best.1 >= cfg.early_stopping_rounds {
                break;
            }
        }
    }
    let iterations_trained = trees.len();
    let degenerate = trees.iter().all(|t| t.nodes.len() == 1);
    let best_iteration = if valid.is_empty() { trees.len() } else { best.1 };
    trees.truncate(best_iteration);
    Ok(BoostedModel {
        config: cfg.clone(),
        feature_names: data.feature_names.clone(),
        base_score,
        trees,
        best_iteration,
        iterations_trained,
        valid_rmse,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub feature: String,
    pub gain: f64,
    pub normalized: f64,
    pub cumulative: f64,
}

/// Split gain summed per feature, descending; ties keep feature order.
pub fn feature_importance(model: &BoostedModel) -> Vec<Importance> {
    let mut gains = vec![0.0; model.feature_names.len()];
    for t in &model.trees {
        for n in &t.nodes {
            if let Node::Split { feature, gain, .. } = n {
                gains[*feature] += gain;
            }
        }
    }
    let total: f64 = gains.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let mut ranked: Vec<(usize, f64)> = gains.into_iter().enumerate().filter(|(_, g)| *g > 0.0).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut cumulative = 0.0;
    ranked
        .into_iter()
        .map(|(f, gain)| {
            cumulative += gain / total;
            Importance { feature: model.feature_names[f].clone(), gain, normalized: gain / total, cumulative }
        })
        .collect()
}

/// Trains every config and keeps the one with the lowest best validation
/// RMSE; ties go to fewer leaves, then the lower learning rate, then grid
/// order.
pub fn grid_search(
    grid: &[TrainConfig],
    data: &WeightedDataset,
    valid: &WeightedDataset,
) -> Result<(TrainConfig, BoostedModel), LearnError> {
    if grid.is_empty() {
        return Err(LearnError::EmptyGrid);
    }
    if valid.is_empty() {
        return Err(LearnError::InvalidDataset("grid search needs a validation set".into()));
    }
    let mut best: Option<(f64, TrainConfig, BoostedModel)> = None;
    for cfg in grid {
        let model = train(data, valid, cfg)?;
        let score = if model.best_iteration == 0 {
            let p = sigmoid(model.base_score);
            rmse(&vec![p; valid.len()], &valid.labels, &valid.weights)
        } else {
            model.valid_rmse[model.best_iteration - 1]
        };
        let better = match &best {
            None => true,
            Some((s, c, _)) => {
                (score, cfg.num_leaves, cfg.learning_rate).partial_cmp(&(*s, c.num_leaves, c.learning_rate))
                    == Some(std::cmp::Ordering::Less)
            }
        };
        if better {
            best = Some((score, cfg.clone(), model));
        }
    }
    let (_, cfg, model) = best.unwrap();
    Ok((cfg, model))
}
