//! A from-scratch second-order gradient boosted trees binary classifier.
//!
//! Each boosting round fits a group of regression trees to the logistic
//! gradients and hessians of the current margins; groups average their trees
//! (independent row/column subsamples when enabled) before the learning-rate
//! shrinkage. Split search is exact greedy over sorted unique values with
//! midpoint thresholds; a split happens only while its regularized gain stays
//! positive and the depth budget allows.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::param_space::{ParamSpace, Solution};
use crate::preprocess::Dataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GbtError {
    #[error("training set must contain both classes")]
    SingleClass,
    #[error("training set needs at least 2 rows, got {0}")]
    TooSmall(usize),
    #[error("feature `{feature}` holds a non-finite value at row {row}")]
    NonFinite { feature: String, row: usize },
    #[error("leaf weight denominator H + l2 is zero")]
    DegenerateLeaf,
    #[error("hyperparameter {field} out of range: {value}")]
    BadHyperparam { field: &'static str, value: f64 },
    #[error("row has {got} features, model expects {expected}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("solution has no parameter named `{0}`")]
    MissingParam(String),
}

/// The eight searched hyperparameters plus the two subsampling fractions the
/// forest preset uses (both default to 1 = off).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtHyperparams {
    /// Boosting rounds K.
    pub n_estimators: usize,
    pub max_depth: usize,
    /// Magnitude clamp on leaf weights; 0 disables it.
    pub max_delta_step: f64,
    /// Trees per round B, averaged before shrinkage.
    pub n_parallel_trees: usize,
    pub learning_rate: f64,
    pub l1: f64,
    pub l2: f64,
    pub gamma: f64,
    #[serde(default = "default_subsample")]
    pub row_subsample: f64,
    #[serde(default = "default_subsample")]
    pub col_subsample: f64,
}

fn default_subsample() -> f64 {
    1.0
}

impl GbtHyperparams {
    /// Single unregularized tree of depth 6: the decision-tree evaluator.
    pub fn preset_dt() -> Self {
        Self {
            n_estimators: 1,
            max_depth: 6,
            max_delta_step: 0.0,
            n_parallel_trees: 1,
            learning_rate: 1.0,
            l1: 0.0,
            l2: 0.0,
            gamma: 0.0,
            row_subsample: 1.0,
            col_subsample: 1.0,
        }
    }

    /// Bagged forest of 50 depth-6 trees on row/column subsamples: the
    /// random-forest evaluator.
    pub fn preset_rf() -> Self {
        Self {
            n_estimators: 1,
            max_depth: 6,
            max_delta_step: 0.0,
            n_parallel_trees: 50,
            learning_rate: 1.0,
            l1: 0.0,
            l2: 0.0,
            gamma: 0.0,
            row_subsample: 0.63,
            col_subsample: 0.7,
        }
    }

    pub fn validate(&self) -> Result<(), GbtError> {
        let bad = |field: &'static str, value: f64| Err(GbtError::BadHyperparam { field, value });
        if self.n_estimators < 1 {
            return bad("n_estimators", self.n_estimators as f64);
        }
        if self.max_depth < 1 {
            return bad("max_depth", self.max_depth as f64);
        }
        if !(self.max_delta_step >= 0.0) {
            return bad("max_delta_step", self.max_delta_step);
        }
        if self.n_parallel_trees < 1 {
            return bad("n_parallel_trees", self.n_parallel_trees as f64);
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate", self.learning_rate);
        }
        if !(self.l1 >= 0.0) {
            return bad("l1", self.l1);
        }
        if !(self.l2 >= 0.0) {
            return bad("l2", self.l2);
        }
        if !(self.gamma >= 0.0) {
            return bad("gamma", self.gamma);
        }
        for (field, value) in [
            ("row_subsample", self.row_subsample),
            ("col_subsample", self.col_subsample),
        ] {
            if !(value > 0.0 && value <= 1.0) {
                return bad(field, value);
            }
        }
        Ok(())
    }

    /// Reads the eight searched fields out of a solution by parameter name.
    /// Unsearched fields keep their defaults.
    pub fn from_solution(space: &ParamSpace, solution: &Solution) -> Result<Self, GbtError> {
        let get = |name: &str| -> Result<f64, GbtError> {
            space
                .index_of(name)
                .map(|i| solution.values()[i])
                .ok_or_else(|| GbtError::MissingParam(name.to_string()))
        };
        Self::from_values(
            get("n_estimators")?,
            get("max_depth")?,
            get("max_delta_step")?,
            get("n_parallel_trees")?,
            get("learning_rate")?,
            get("l1")?,
            get("l2")?,
            get("gamma")?,
        )
    }

    /// As [`GbtHyperparams::from_solution`], from a name/value map (e.g. a
    /// saved best-parameter file).
    pub fn from_named(
        params: &std::collections::BTreeMap<String, f64>,
    ) -> Result<Self, GbtError> {
        let get = |name: &str| -> Result<f64, GbtError> {
            params
                .get(name)
                .copied()
                .ok_or_else(|| GbtError::MissingParam(name.to_string()))
        };
        Self::from_values(
            get("n_estimators")?,
            get("max_depth")?,
            get("max_delta_step")?,
            get("n_parallel_trees")?,
            get("learning_rate")?,
            get("l1")?,
            get("l2")?,
            get("gamma")?,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn from_values(
        n_estimators: f64,
        max_depth: f64,
        max_delta_step: f64,
        n_parallel_trees: f64,
        learning_rate: f64,
        l1: f64,
        l2: f64,
        gamma: f64,
    ) -> Result<Self, GbtError> {
        let hp = Self {
            n_estimators: n_estimators.round() as usize,
            max_depth: max_depth.round() as usize,
            max_delta_step,
            n_parallel_trees: n_parallel_trees.round() as usize,
            learning_rate,
            l1,
            l2,
            gamma,
            row_subsample: 1.0,
            col_subsample: 1.0,
        };
        hp.validate()?;
        Ok(hp)
    }
}

/// A regression tree node: an internal split (rows with `value < threshold`
/// go left) or a leaf weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        weight: f64,
    },
}

impl TreeNode {
    /// The leaf weight this row lands in.
    pub fn output(&self, row: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { weight } => *weight,
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] < *threshold {
                    left.output(row)
                } else {
                    right.output(row)
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// Additive tree model: margin = base + sum over rounds of
/// `learning_rate * mean(group outputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub hyperparams: GbtHyperparams,
    pub base_margin: f64,
    pub feature_names: Vec<String>,
    rounds: Vec<Vec<TreeNode>>,
}

impl BoostedEnsemble {
    pub fn rounds(&self) -> &[Vec<TreeNode>] {
        &self.rounds
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn total_leaf_count(&self) -> usize {
        self.rounds
            .iter()
            .flat_map(|group| group.iter())
            .map(TreeNode::leaf_count)
            .sum()
    }

    pub fn predict_margin(&self, row: &[f64]) -> Result<f64, GbtError> {
        if row.len() != self.n_features() {
            return Err(GbtError::FeatureMismatch {
                expected: self.n_features(),
                got: row.len(),
            });
        }
        let mut margin = self.base_margin;
        for group in &self.rounds {
            let sum: f64 = group.iter().map(|tree| tree.output(row)).sum();
            margin += self.hyperparams.learning_rate * sum / group.len() as f64;
        }
        Ok(margin)
    }

    /// Probability of the positive class, strictly inside (0, 1).
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64, GbtError> {
        Ok(sigmoid(self.predict_margin(row)?))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ensemble serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn sigmoid(x: f64) -> f64 {
    let p = 1.0 / (1.0 + (-x).exp());
    // Keep probabilities strictly inside (0, 1) so log-loss stays finite.
    p.clamp(1e-15, 1.0 - 1e-15)
}

/// Logistic loss gradient and hessian at a raw margin:
/// `p = sigmoid(margin)`, `g = p - label`, `h = p (1 - p)`.
pub fn logistic_grad_hess(label: u8, margin: f64) -> (f64, f64) {
    let p = 1.0 / (1.0 + (-margin).exp());
    (p - label as f64, p * (1.0 - p))
}

fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

/// Closed-form leaf weight minimizing the second-order objective with L2 and
/// L1 penalties: `-soft_threshold(G, l1) / (H + l2)`, then clamped to
/// `|w| <= max_delta_step` when the clamp is enabled (> 0).
pub fn leaf_weight(
    grad_sum: f64,
    hess_sum: f64,
    l2: f64,
    l1: f64,
    max_delta_step: f64,
) -> Result<f64, GbtError> {
    let denominator = hess_sum + l2;
    if denominator == 0.0 {
        return Err(GbtError::DegenerateLeaf);
    }
    let mut weight = -soft_threshold(grad_sum, l1) / denominator;
    if max_delta_step > 0.0 {
        weight = weight.clamp(-max_delta_step, max_delta_step);
    }
    Ok(weight)
}

/// Second-order split gain with the per-leaf penalty:
/// `1/2 [G_L^2/(H_L+l2) + G_R^2/(H_R+l2) - (G_L+G_R)^2/(H_L+H_R+l2)] - gamma`.
pub fn split_gain(g_left: f64, h_left: f64, g_right: f64, h_right: f64, l2: f64, gamma: f64) -> f64 {
    let term = |g: f64, h: f64| g * g / (h + l2);
    0.5 * (term(g_left, h_left) + term(g_right, h_right) - term(g_left + g_right, h_left + h_right))
        - gamma
}

/// Leaf weight with the degenerate denominator treated as a zero-gradient
/// leaf (a node of fully saturated rows has nothing left to fit).
fn guarded_leaf_weight(grad_sum: f64, hess_sum: f64, hp: &GbtHyperparams) -> f64 {
    leaf_weight(grad_sum, hess_sum, hp.l2, hp.l1, hp.max_delta_step).unwrap_or(0.0)
}

struct TreeContext<'a> {
    columns: Vec<&'a [f64]>,
    grad: &'a [f64],
    hess: &'a [f64],
    hp: &'a GbtHyperparams,
}

/// Builds one tree over per-feature row lists pre-sorted by feature value.
/// `features[i]` is the global feature index behind `sorted_rows[i]`.
fn build_node(
    ctx: &TreeContext<'_>,
    features: &[usize],
    sorted_rows: Vec<Vec<u32>>,
    depth: usize,
) -> TreeNode {
    let rows = &sorted_rows[0];
    let grad_sum: f64 = rows.iter().map(|&r| ctx.grad[r as usize]).sum();
    let hess_sum: f64 = rows.iter().map(|&r| ctx.hess[r as usize]).sum();

    let leaf = |g: f64, h: f64| TreeNode::Leaf {
        weight: guarded_leaf_weight(g, h, ctx.hp),
    };
    if depth >= ctx.hp.max_depth || rows.len() < 2 {
        return leaf(grad_sum, hess_sum);
    }

    // Exact greedy over sorted values, midpoint thresholds. Features ascend
    // and thresholds ascend within a feature, so a strict improvement rule
    // breaks ties toward the lowest feature index, then smallest threshold.
    let mut best: Option<(f64, usize, usize, f64)> = None; // gain, list idx, feature, threshold
    for (list_index, &feature) in features.iter().enumerate() {
        let values = ctx.columns[feature];
        let order = &sorted_rows[list_index];
        let mut g_run = 0.0;
        let mut h_run = 0.0;
        let mut count = 0usize;
        let mut prev_value = f64::NAN;
        for &row in order {
            let value = values[row as usize];
            if count > 0 && value > prev_value {
                let gain = split_gain(
                    g_run,
                    h_run,
                    grad_sum - g_run,
                    hess_sum - h_run,
                    ctx.hp.l2,
                    ctx.hp.gamma,
                );
                if gain.is_finite() && best.is_none_or(|(b, _, _, _)| gain > b) {
                    best = Some((gain, list_index, feature, 0.5 * (prev_value + value)));
                }
            }
            g_run += ctx.grad[row as usize];
            h_run += ctx.hess[row as usize];
            count += 1;
            prev_value = value;
        }
    }

    let Some((gain, _, feature, threshold)) = best else {
        return leaf(grad_sum, hess_sum);
    };
    if gain <= 0.0 {
        return leaf(grad_sum, hess_sum);
    }

    // Stable partition keeps every per-feature list sorted.
    let split_values = ctx.columns[feature];
    let mut left_lists = Vec::with_capacity(sorted_rows.len());
    let mut right_lists = Vec::with_capacity(sorted_rows.len());
    for order in sorted_rows {
        let mut left = Vec::new();
        let mut right = Vec::new();
        for row in order {
            if split_values[row as usize] < threshold {
                left.push(row);
            } else {
                right.push(row);
            }
        }
        left_lists.push(left);
        right_lists.push(right);
    }

    TreeNode::Internal {
        feature,
        threshold,
        left: Box::new(build_node(ctx, features, left_lists, depth + 1)),
        right: Box::new(build_node(ctx, features, right_lists, depth + 1)),
    }
}

/// Trains the boosted ensemble. The randomness source only feeds row/column
/// subsampling; with both fractions at 1 the trees in a round are identical
/// and training is fully deterministic.
pub fn train<R: Rng + ?Sized>(
    train_set: &Dataset,
    hp: &GbtHyperparams,
    rng: &mut R,
) -> Result<BoostedEnsemble, GbtError> {
    hp.validate()?;
    let n_rows = train_set.n_rows();
    if n_rows < 2 {
        return Err(GbtError::TooSmall(n_rows));
    }
    for (name, column) in train_set
        .feature_names()
        .iter()
        .zip((0..train_set.n_features()).map(|i| train_set.column(i)))
    {
        if let Some(row) = column.iter().position(|v| !v.is_finite()) {
            return Err(GbtError::NonFinite {
                feature: name.clone(),
                row,
            });
        }
    }
    let positives = train_set.labels().iter().filter(|&&l| l == 1).count();
    let negatives = n_rows - positives;
    if positives == 0 || negatives == 0 {
        return Err(GbtError::SingleClass);
    }

    let columns: Vec<&[f64]> = (0..train_set.n_features())
        .map(|i| train_set.column(i))
        .collect();
    let n_features = columns.len();

    // One global sort per feature; every tree filters these orders.
    let global_sorted: Vec<Vec<u32>> = columns
        .iter()
        .map(|values| {
            let mut order: Vec<u32> = (0..n_rows as u32).collect();
            order.sort_by(|&a, &b| {
                values[a as usize]
                    .partial_cmp(&values[b as usize])
                    .expect("finite values compare")
            });
            order
        })
        .collect();

    let base_margin = (positives as f64 / negatives as f64).ln();
    let mut margins = vec![base_margin; n_rows];
    let full_sample = hp.row_subsample >= 1.0 && hp.col_subsample >= 1.0;
    let all_features: Vec<usize> = (0..n_features).collect();

    let mut grad = vec![0.0; n_rows];
    let mut hess = vec![0.0; n_rows];
    let mut rounds = Vec::with_capacity(hp.n_estimators);
    for _ in 0..hp.n_estimators {
        for i in 0..n_rows {
            let (g, h) = logistic_grad_hess(train_set.labels()[i], margins[i]);
            grad[i] = g;
            hess[i] = h;
        }
        let ctx = TreeContext {
            columns: columns.clone(),
            grad: &grad,
            hess: &hess,
            hp,
        };

        let mut group_sum = vec![0.0; n_rows];
        let group: Vec<TreeNode> = if full_sample {
            let tree = build_node(&ctx, &all_features, global_sorted.clone(), 0);
            for i in 0..n_rows {
                let row: Vec<f64> = columns.iter().map(|c| c[i]).collect();
                group_sum[i] = tree.output(&row) * hp.n_parallel_trees as f64;
            }
            vec![tree; hp.n_parallel_trees]
        } else {
            let mut trees = Vec::with_capacity(hp.n_parallel_trees);
            for _ in 0..hp.n_parallel_trees {
                let row_count =
                    ((hp.row_subsample * n_rows as f64).round() as usize).clamp(1, n_rows);
                let col_count =
                    ((hp.col_subsample * n_features as f64).round() as usize).clamp(1, n_features);
                let mut in_tree = vec![false; n_rows];
                for index in rand::seq::index::sample(rng, n_rows, row_count) {
                    in_tree[index] = true;
                }
                let mut features: Vec<usize> =
                    rand::seq::index::sample(rng, n_features, col_count).into_vec();
                features.sort_unstable();
                let sorted_rows: Vec<Vec<u32>> = features
                    .iter()
                    .map(|&f| {
                        global_sorted[f]
                            .iter()
                            .copied()
                            .filter(|&r| in_tree[r as usize])
                            .collect()
                    })
                    .collect();
                let tree = build_node(&ctx, &features, sorted_rows, 0);
                for i in 0..n_rows {
                    let row: Vec<f64> = columns.iter().map(|c| c[i]).collect();
                    group_sum[i] += tree.output(&row);
                }
                trees.push(tree);
            }
            trees
        };

        for i in 0..n_rows {
            margins[i] += hp.learning_rate * group_sum[i] / hp.n_parallel_trees as f64;
        }
        rounds.push(group);
    }

    Ok(BoostedEnsemble {
        hyperparams: hp.clone(),
        base_margin,
        feature_names: train_set.feature_names().to_vec(),
        rounds,
    })
}
