//! Second-order gradient-boosted regression trees with a squared-error
//! objective.
//!
//! Trees are grown level by level with exact greedy split search. Each
//! feature column is sorted once per fit; at every level a single pass over
//! each sorted column accumulates left-hand gradient statistics for all open
//! nodes at once. Features are scanned in parallel and reduced in index order,
//! so the fitted model does not depend on the number of worker threads.

use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::verify;

pub const MODEL_FORMAT: &str = "hydrofuse-gbt";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Fraction of rows drawn without replacement for each round.
    pub subsample: f64,
    /// Fraction of features drawn for each split.
    pub colsample: f64,
    pub min_child_weight: f64,
    pub l1_penalty: f64,
    pub l2_penalty: f64,
    pub min_split_loss: f64,
    pub n_rounds: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        crate::config::FrameworkConfig::default().gbt_params()
    }
}

/// Soft-thresholding of a gradient sum by the L1 penalty.
pub fn shrink(g: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        g
    } else {
        g.signum() * (g.abs() - alpha).max(0.0)
    }
}

/// Structure score `shrink(G)^2 / (H + lambda)`.
pub fn structure_score(g: f64, h: f64, params: &GbtParams) -> f64 {
    let s = shrink(g, params.l1_penalty);
    s * s / (h + params.l2_penalty)
}

/// Optimal leaf weight `-shrink(G) / (H + lambda)`.
pub fn leaf_weight(g: f64, h: f64, params: &GbtParams) -> f64 {
    -shrink(g, params.l1_penalty) / (h + params.l2_penalty)
}

/// Loss reduction of splitting a node into the given children.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, params: &GbtParams) -> f64 {
    0.5 * (structure_score(gl, hl, params) + structure_score(gr, hr, params)
        - structure_score(gl + gr, hl + hr, params))
        - params.min_split_loss
}

/// Best split found for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub grad_left: f64,
    pub hess_left: f64,
    pub grad_right: f64,
    pub hess_right: f64,
    pub gain: f64,
}

/// A node of a fitted regression tree. Rows with `x[feature] < threshold`
/// go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        grad_sum: f64,
        hess_sum: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        weight: f64,
        grad_sum: f64,
        hess_sum: f64,
    },
}

impl TreeNode {
    /// Weight of the leaf `row` is routed to.
    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { weight, .. } => return *weight,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    node = if row[*feature] < *threshold { left } else { right };
                }
            }
        }
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn grad_sum(&self) -> f64 {
        match self {
            TreeNode::Leaf { grad_sum, .. } | TreeNode::Split { grad_sum, .. } => *grad_sum,
        }
    }

    pub fn hess_sum(&self) -> f64 {
        match self {
            TreeNode::Leaf { hess_sum, .. } | TreeNode::Split { hess_sum, .. } => *hess_sum,
        }
    }

    /// Visits every node depth-first, left before right.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a TreeNode)) {
        f(self);
        if let TreeNode::Split { left, right, .. } = self {
            left.walk(f);
            right.walk(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtMeta {
    /// Rounds grown before stopping.
    pub rounds_trained: usize,
    /// Rounds kept in the model (best validation KGE).
    pub rounds_used: usize,
    pub best_validation_kge: Option<f64>,
    pub seed: u64,
}

/// Fitted additive model: `prediction = base_score + eta * sum_k leaf_k(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub format: String,
    pub version: u32,
    pub columns: Vec<String>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<TreeNode>,
    pub meta: GbtMeta,
    pub params: GbtParams,
}

/// Per-round diagnostics collected during fitting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    /// Training MSE after each round (all training rows).
    pub train_mse: Vec<f64>,
    /// Validation KGE after each round; empty without a validation set.
    pub valid_kge: Vec<f64>,
}

impl GbtModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.predict_row_partial(row, self.trees.len())
    }

    /// Prediction using only the first `n_trees` trees.
    pub fn predict_row_partial(&self, row: &[f64], n_trees: usize) -> f64 {
        self.trees[..n_trees.min(self.trees.len())]
            .iter()
            .fold(self.base_score, |acc, t| acc + self.learning_rate * t.leaf_value(row))
    }

    pub fn predict(&self, rows: &FeatureMatrix) -> Result<Vec<f64>> {
        self.predict_partial(rows, self.trees.len())
    }

    pub fn predict_partial(&self, rows: &FeatureMatrix, n_trees: usize) -> Result<Vec<f64>> {
        self.check_columns(rows)?;
        Ok(rows.rows().map(|r| self.predict_row_partial(r, n_trees)).collect())
    }

    fn check_columns(&self, rows: &FeatureMatrix) -> Result<()> {
        if rows.columns() != self.columns.as_slice() {
            return Err(Error::ColumnMismatch {
                expected: self.columns.clone(),
                found: rows.columns().to_vec(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: GbtModel = serde_json::from_str(text)?;
        if model.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!("expected format `{MODEL_FORMAT}`, found `{}`", model.format)));
        }
        if model.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {}", model.version)));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Early-stopping score: validation KGE, or negative infinity when KGE is
/// undefined (for example constant predictions).
pub fn kge_eval_hook(predictions: &[f64], targets: &[f64]) -> f64 {
    verify::kge(predictions, targets).map_or(f64::NEG_INFINITY, |k| k.value)
}

pub fn fit_gbt(train: &FeatureMatrix, valid: Option<&FeatureMatrix>, params: &GbtParams) -> Result<GbtModel> {
    fit_gbt_traced(train, valid, params).map(|(m, _)| m)
}

/// Fits the boosted model and returns per-round diagnostics.
///
/// With a non-empty validation matrix, the model is truncated to the round
/// with the best validation KGE and training stops after
/// `early_stop_patience` rounds without improvement.
pub fn fit_gbt_traced(
    train: &FeatureMatrix,
    valid: Option<&FeatureMatrix>,
    params: &GbtParams,
) -> Result<(GbtModel, TrainingTrace)> {
    if train.is_empty() {
        return Err(Error::InsufficientData("empty training matrix".into()));
    }
    train.ensure_finite("training matrix")?;
    let valid = valid.filter(|v| !v.is_empty());
    if let Some(v) = valid {
        if v.columns() != train.columns() {
            return Err(Error::ColumnMismatch {
                expected: train.columns().to_vec(),
                found: v.columns().to_vec(),
            });
        }
        v.ensure_finite("validation matrix")?;
    }

    let n = train.n_rows();
    let y = train.targets();
    let base_score = mean(y);
    let columns = presort(train);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut pred = vec![base_score; n];
    let mut valid_pred = valid.map(|v| vec![base_score; v.n_rows()]);
    let mut grad = vec![0.0; n];
    let hess = vec![1.0; n];
    let mut trees = Vec::new();
    let mut trace = TrainingTrace::default();

    let mut best_kge = f64::NEG_INFINITY;
    let mut best_rounds = 0usize;
    let mut since_best = 0usize;

    for _round in 0..params.n_rounds {
        for i in 0..n {
            grad[i] = pred[i] - y[i];
        }
        let in_bag = draw_rows(n, params.subsample, &mut rng);
        let tree = grow_tree(train, &columns, &grad, &hess, &in_bag, params, &mut rng);

        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.leaf_value(train.row(i));
        }
        trace.train_mse.push(pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n as f64);
        trees.push(tree);

        if let (Some(v), Some(vp)) = (valid, valid_pred.as_mut()) {
            let tree = trees.last().expect("just pushed");
            for (i, p) in vp.iter_mut().enumerate() {
                *p += params.learning_rate * tree.leaf_value(v.row(i));
            }
            let score = kge_eval_hook(vp, v.targets());
            trace.valid_kge.push(score);
            if score > best_kge {
                best_kge = score;
                best_rounds = trees.len();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= params.early_stop_patience {
                    break;
                }
            }
        }
    }

    let rounds_trained = trees.len();
    let (rounds_used, best_validation_kge) = if valid.is_some() {
        trees.truncate(best_rounds);
        (best_rounds, best_kge.is_finite().then_some(best_kge))
    } else {
        (rounds_trained, None)
    };

    let model = GbtModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        columns: train.columns().to_vec(),
        base_score,
        learning_rate: params.learning_rate,
        trees,
        meta: GbtMeta { rounds_trained, rounds_used, best_validation_kge, seed: params.seed },
        params: *params,
    };
    Ok((model, trace))
}

fn mean(v: &[f64]) -> f64 {
    let origin = v[0];
    origin + v.iter().map(|x| x - origin).sum::<f64>() / v.len() as f64
}

/// Per feature: `(row, value)` pairs in ascending value order, ties by row.
fn presort(m: &FeatureMatrix) -> Vec<Vec<(u32, f64)>> {
    (0..m.n_cols())
        .map(|f| {
            let mut col: Vec<(u32, f64)> = (0..m.n_rows()).map(|i| (i as u32, m.value(i, f))).collect();
            col.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            col
        })
        .collect()
}

fn draw_rows(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
    if fraction >= 1.0 {
        return vec![true; n];
    }
    let k = ((fraction * n as f64).floor() as usize).clamp(1, n);
    let mut mask = vec![false; n];
    for i in index::sample(rng, n, k) {
        mask[i] = true;
    }
    mask
}

fn draw_features(p: usize, fraction: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
    if fraction >= 1.0 {
        return vec![true; p];
    }
    let k = ((fraction * p as f64).floor() as usize).clamp(1, p);
    let mut mask = vec![false; p];
    for f in index::sample(rng, p, k) {
        mask[f] = true;
    }
    mask
}

/// Threshold strictly between two adjacent distinct values.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo {
        mid
    } else {
        hi
    }
}

const NO_NODE: u32 = u32::MAX;

struct BuildNode {
    grad_sum: f64,
    hess_sum: f64,
    split: Option<(usize, f64, f64, usize, usize)>,
}

#[derive(Clone, Copy)]
struct ScanState {
    grad_left: f64,
    hess_left: f64,
    last: f64,
    started: bool,
}

fn grow_tree(
    m: &FeatureMatrix,
    columns: &[Vec<(u32, f64)>],
    grad: &[f64],
    hess: &[f64],
    in_bag: &[bool],
    params: &GbtParams,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    let n = m.n_rows();
    let p = m.n_cols();

    let mut pos: Vec<u32> = in_bag.iter().map(|&b| if b { 0 } else { NO_NODE }).collect();
    let (g0, h0) = (0..n).filter(|&i| in_bag[i]).fold((0.0, 0.0), |(g, h), i| (g + grad[i], h + hess[i]));
    let mut nodes = vec![BuildNode { grad_sum: g0, hess_sum: h0, split: None }];
    let mut frontier = vec![0usize];

    for _depth in 0..params.max_depth {
        if frontier.is_empty() {
            break;
        }
        let mut slot_of = vec![NO_NODE; nodes.len()];
        for (s, &node) in frontier.iter().enumerate() {
            slot_of[node] = s as u32;
        }
        let allowed: Vec<Vec<bool>> = frontier.iter().map(|_| draw_features(p, params.colsample, rng)).collect();
        let totals: Vec<(f64, f64)> = frontier.iter().map(|&k| (nodes[k].grad_sum, nodes[k].hess_sum)).collect();

        let per_feature: Vec<Vec<Option<SplitCandidate>>> = (0..p)
            .into_par_iter()
            .map(|f| scan_feature(f, &columns[f], &pos, &slot_of, &allowed, &totals, grad, hess, params))
            .collect();

        let mut best: Vec<Option<SplitCandidate>> = vec![None; frontier.len()];
        for cands in &per_feature {
            for (slot, cand) in cands.iter().enumerate() {
                if let Some(c) = cand {
                    if best[slot].is_none_or(|b| c.gain > b.gain) {
                        best[slot] = Some(*c);
                    }
                }
            }
        }

        // Children are created in frontier order; `route[slot]` holds (left id, feature, threshold).
        let mut route: Vec<Option<(usize, usize, f64)>> = vec![None; frontier.len()];
        let mut next = Vec::new();
        for (slot, cand) in best.iter().enumerate() {
            if let Some(c) = cand.filter(|c| c.gain > 0.0) {
                let left = nodes.len();
                nodes.push(BuildNode { grad_sum: 0.0, hess_sum: 0.0, split: None });
                nodes.push(BuildNode { grad_sum: 0.0, hess_sum: 0.0, split: None });
                route[slot] = Some((left, c.feature, c.threshold));
                next.push(left);
                next.push(left + 1);
            }
        }
        if next.is_empty() {
            break;
        }

        // Reassign rows and recompute child statistics in row order.
        for i in 0..n {
            let node = pos[i];
            if node == NO_NODE {
                continue;
            }
            let slot = slot_of[node as usize];
            if slot == NO_NODE {
                continue;
            }
            if let Some((left, feature, threshold)) = route[slot as usize] {
                let child = if m.value(i, feature) < threshold { left } else { left + 1 };
                pos[i] = child as u32;
                nodes[child].grad_sum += grad[i];
                nodes[child].hess_sum += hess[i];
            }
        }
        for (slot, r) in route.iter().enumerate() {
            if let Some((left, feature, threshold)) = *r {
                let (l, rt) = (&nodes[left], &nodes[left + 1]);
                let gain = split_gain(l.grad_sum, l.hess_sum, rt.grad_sum, rt.hess_sum, params);
                nodes[frontier[slot]].split = Some((feature, threshold, gain, left, left + 1));
            }
        }
        frontier = next;
    }

    assemble(&nodes, 0, params)
}

#[allow(clippy::too_many_arguments)]
fn scan_feature(
    feature: usize,
    column: &[(u32, f64)],
    pos: &[u32],
    slot_of: &[u32],
    allowed: &[Vec<bool>],
    totals: &[(f64, f64)],
    grad: &[f64],
    hess: &[f64],
    params: &GbtParams,
) -> Vec<Option<SplitCandidate>> {
    let slots = totals.len();
    let mut state = vec![ScanState { grad_left: 0.0, hess_left: 0.0, last: 0.0, started: false }; slots];
    let mut best: Vec<Option<SplitCandidate>> = vec![None; slots];
    let active: Vec<bool> = allowed.iter().map(|a| a[feature]).collect();
    if !active.iter().any(|&a| a) {
        return best;
    }

    for &(row, value) in column {
        let node = pos[row as usize];
        if node == NO_NODE {
            continue;
        }
        let slot = slot_of[node as usize];
        if slot == NO_NODE || !active[slot as usize] {
            continue;
        }
        let slot = slot as usize;
        let st = &mut state[slot];
        if st.started && value > st.last {
            let (g, h) = totals[slot];
            let (gl, hl) = (st.grad_left, st.hess_left);
            let (gr, hr) = (g - gl, h - hl);
            if hl >= params.min_child_weight && hr >= params.min_child_weight {
                let gain = split_gain(gl, hl, gr, hr, params);
                if best[slot].is_none_or(|b| gain > b.gain) {
                    best[slot] = Some(SplitCandidate {
                        feature,
                        threshold: midpoint(st.last, value),
                        grad_left: gl,
                        hess_left: hl,
                        grad_right: gr,
                        hess_right: hr,
                        gain,
                    });
                }
            }
        }
        st.grad_left += grad[row as usize];
        st.hess_left += hess[row as usize];
        st.last = value;
        st.started = true;
    }
    best
}

fn assemble(nodes: &[BuildNode], id: usize, params: &GbtParams) -> TreeNode {
    let node = &nodes[id];
    match node.split {
        Some((feature, threshold, gain, left, right)) => TreeNode::Split {
            feature,
            threshold,
            gain,
            grad_sum: node.grad_sum,
            hess_sum: node.hess_sum,
            left: Box::new(assemble(nodes, left, params)),
            right: Box::new(assemble(nodes, right, params)),
        },
        None => TreeNode::Leaf {
            weight: leaf_weight(node.grad_sum, node.hess_sum, params),
            grad_sum: node.grad_sum,
            hess_sum: node.hess_sum,
        },
    }
}
