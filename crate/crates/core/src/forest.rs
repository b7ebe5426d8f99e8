//! Bagged regression forest (variance-reduction CART) for peak magnitudes.
//!
//! Each tree draws a bootstrap resample of the training rows from its own
//! seeded generator, so trees are grown independently in parallel and the
//! fitted forest is identical for any worker count.

use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const MODEL_FORMAT: &str = "hydrofuse-rf";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features drawn at each node.
    pub feature_fraction: f64,
    /// Fewer training rows than this and no forest is fitted.
    pub min_peak_rows: usize,
    pub seed: u64,
}

impl Default for RfParams {
    fn default() -> Self {
        crate::config::FrameworkConfig::default().rf_params()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RfNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<RfNode>,
        right: Box<RfNode>,
    },
    Leaf {
        value: f64,
        /// Bootstrap samples (with multiplicity) that reached this leaf.
        n_samples: usize,
    },
}

impl RfNode {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                RfNode::Leaf { value, .. } => return *value,
                RfNode::Split { feature, threshold, left, right } => {
                    node = if row[*feature] < *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            RfNode::Leaf { .. } => 0,
            RfNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// `(value, n_samples)` of every leaf, left to right.
    pub fn leaves(&self) -> Vec<(f64, usize)> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<(f64, usize)>) {
        match self {
            RfNode::Leaf { value, n_samples } => out.push((*value, *n_samples)),
            RfNode::Split { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfTree {
    /// Seed of the generator that drew this tree's bootstrap and feature subsets.
    pub seed: u64,
    pub root: RfNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfModel {
    pub format: String,
    pub version: u32,
    pub columns: Vec<String>,
    pub target_min: f64,
    pub target_max: f64,
    pub n_training_rows: usize,
    pub trees: Vec<RfTree>,
    pub params: RfParams,
}

/// Seed of tree `index`, derived from the forest seed only.
pub fn tree_seed(forest_seed: u64, index: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = forest_seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn bootstrap(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Mean taken about the first element; exact for constant inputs.
fn stable_mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = values.clone();
    let Some(origin) = it.next() else { return f64::NAN };
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + (v - origin), n + 1));
    origin + sum / n as f64
}

/// Fits the forest on peak rows. Fewer than `min_peak_rows` rows yields
/// [`Error::PeakModelUnavailable`].
pub fn fit_rf(rows: &FeatureMatrix, params: &RfParams) -> Result<RfModel> {
    let n = rows.n_rows();
    if n < params.min_peak_rows.max(1) {
        return Err(Error::PeakModelUnavailable { found: n, required: params.min_peak_rows.max(1) });
    }
    rows.ensure_finite("peak rows")?;
    if params.n_trees == 0 || params.max_depth == 0 || params.min_samples_leaf == 0 {
        return Err(Error::InvalidArgument { name: "rf params", reason: "counts must be >= 1".into() });
    }
    if !(params.feature_fraction > 0.0 && params.feature_fraction <= 1.0) {
        return Err(Error::InvalidArgument { name: "feature_fraction", reason: "must lie in (0, 1]".into() });
    }
    let y = rows.targets();
    let target_min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let target_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let trees: Vec<RfTree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let seed = tree_seed(params.seed, t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sample = bootstrap(n, &mut rng);
            let root = grow(rows, sample, 0, params, &mut rng);
            RfTree { seed, root }
        })
        .collect();

    Ok(RfModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        columns: rows.columns().to_vec(),
        target_min,
        target_max,
        n_training_rows: n,
        trees,
        params: *params,
    })
}

fn leaf(rows: &FeatureMatrix, sample: &[usize]) -> RfNode {
    let y = rows.targets();
    let values = sample.iter().map(|&i| y[i]);
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.clone().fold(f64::NEG_INFINITY, f64::max);
    RfNode::Leaf { value: stable_mean(values).clamp(lo, hi), n_samples: sample.len() }
}

fn grow(rows: &FeatureMatrix, sample: Vec<usize>, depth: usize, params: &RfParams, rng: &mut ChaCha8Rng) -> RfNode {
    let y = rows.targets();
    let n = sample.len();
    let first = y[sample[0]];
    let constant = sample.iter().all(|&i| y[i] == first);
    if depth >= params.max_depth || n < 2 * params.min_samples_leaf || constant {
        return leaf(rows, &sample);
    }

    let p = rows.n_cols();
    let k = ((params.feature_fraction * p as f64).floor() as usize).clamp(1, p);
    let mut features: Vec<usize> = index::sample(rng, p, k).into_vec();
    features.sort_unstable();

    // Sums about the node's first target keep the variance terms well conditioned.
    let origin = first;
    let total: f64 = sample.iter().map(|&i| y[i] - origin).sum();
    let total_sq: f64 = sample.iter().map(|&i| (y[i] - origin).powi(2)).sum();
    let parent_sse = total_sq - total * total / n as f64;

    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = sample.clone();
    for &f in &features {
        order.sort_by(|&a, &b| rows.value(a, f).total_cmp(&rows.value(b, f)).then(a.cmp(&b)));
        let (mut sl, mut sql) = (0.0, 0.0);
        for j in 0..n - 1 {
            let d = y[order[j]] - origin;
            sl += d;
            sql += d * d;
            let nl = j + 1;
            let nr = n - nl;
            if nl < params.min_samples_leaf || nr < params.min_samples_leaf {
                continue;
            }
            let (lo, hi) = (rows.value(order[j], f), rows.value(order[j + 1], f));
            if hi <= lo {
                continue;
            }
            let sse_l = sql - sl * sl / nl as f64;
            let (sr, sqr) = (total - sl, total_sq - sql);
            let sse_r = sqr - sr * sr / nr as f64;
            let reduction = parent_sse - sse_l - sse_r;
            if reduction > 0.0 && best.is_none_or(|b| reduction > b.0) {
                let mid = lo + (hi - lo) / 2.0;
                best = Some((reduction, f, if mid > lo { mid } else { hi }));
            }
        }
    }

    match best {
        None => leaf(rows, &sample),
        Some((_, feature, threshold)) => {
            let (left, right): (Vec<usize>, Vec<usize>) =
                sample.iter().partition(|&&i| rows.value(i, feature) < threshold);
            RfNode::Split {
                feature,
                threshold,
                left: Box::new(grow(rows, left, depth + 1, params, rng)),
                right: Box::new(grow(rows, right, depth + 1, params, rng)),
            }
        }
    }
}

impl RfModel {
    /// Mean of the per-tree predictions, summed in tree order.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let per_tree = self.trees.iter().map(|t| t.root.predict(row));
        let lo = per_tree.clone().fold(f64::INFINITY, f64::min);
        let hi = per_tree.clone().fold(f64::NEG_INFINITY, f64::max);
        stable_mean(per_tree).clamp(lo, hi)
    }

    pub fn predict(&self, rows: &FeatureMatrix) -> Result<Vec<f64>> {
        if rows.columns() != self.columns.as_slice() {
            return Err(Error::ColumnMismatch { expected: self.columns.clone(), found: rows.columns().to_vec() });
        }
        Ok(rows.rows().map(|r| self.predict_row(r)).collect())
    }

    /// Out-of-bag predictions for the training rows, `None` where a row was
    /// in every bootstrap. `rows` must be the matrix the forest was fitted on.
    pub fn oob_predictions(&self, rows: &FeatureMatrix) -> Result<Vec<Option<f64>>> {
        if rows.n_rows() != self.n_training_rows {
            return Err(Error::LengthMismatch { left: rows.n_rows(), right: self.n_training_rows });
        }
        let n = rows.n_rows();
        let mut sums = vec![0.0; n];
        let mut counts = vec![0usize; n];
        for tree in &self.trees {
            let mut rng = ChaCha8Rng::seed_from_u64(tree.seed);
            let mut in_bag = vec![false; n];
            for i in bootstrap(n, &mut rng) {
                in_bag[i] = true;
            }
            for i in (0..n).filter(|&i| !in_bag[i]) {
                sums[i] += tree.root.predict(rows.row(i));
                counts[i] += 1;
            }
        }
        Ok(sums.iter().zip(&counts).map(|(s, &c)| (c > 0).then(|| s / c as f64)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: RfModel = serde_json::from_str(text)?;
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
