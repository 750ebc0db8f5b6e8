//! Binary-classification evaluation: confusion matrix, threshold metrics, and
//! exact ROC AUC via the Mann–Whitney statistic. The positive class is 1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("labels and predictions differ in length: {labels} vs {predictions}")]
    LengthMismatch { labels: usize, predictions: usize },
    #[error("labels and predictions must be empty of nothing: got zero rows")]
    Empty,
    #[error("value {0} is not a binary 0/1 label")]
    NonBinary(u8),
    #[error("ROC AUC needs both classes present")]
    SingleClass,
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
}

/// 2x2 counts at a fixed threshold, positive class = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

/// Threshold metrics derived from a confusion matrix. Ratios with an empty
/// denominator are reported as `None`, never silently zeroed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
}

/// Per-model evaluation row: the five reported measures plus the model label.
/// Undefined ratios serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub accuracy: f64,
    pub auc: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
}

/// Applies a decision threshold to probability scores: 1 iff `score >= threshold`.
pub fn binarize(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores
        .iter()
        .map(|&s| if s >= threshold { 1 } else { 0 })
        .collect()
}

/// Counts the 2x2 confusion matrix from binary labels and binary predictions.
pub fn confusion(labels: &[u8], predictions: &[u8]) -> Result<ConfusionMatrix, MetricsError> {
    if labels.len() != predictions.len() {
        return Err(MetricsError::LengthMismatch {
            labels: labels.len(),
            predictions: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut m = ConfusionMatrix {
        true_pos: 0,
        false_pos: 0,
        true_neg: 0,
        false_neg: 0,
    };
    for (&label, &pred) in labels.iter().zip(predictions) {
        for value in [label, pred] {
            if value > 1 {
                return Err(MetricsError::NonBinary(value));
            }
        }
        match (label, pred) {
            (1, 1) => m.true_pos += 1,
            (0, 1) => m.false_pos += 1,
            (0, 0) => m.true_neg += 1,
            (1, 0) => m.false_neg += 1,
            _ => unreachable!(),
        }
    }
    Ok(m)
}

/// Accuracy, sensitivity, specificity, and F1 from a confusion matrix.
pub fn classification_metrics(m: &ConfusionMatrix) -> Result<ClassificationMetrics, MetricsError> {
    let total = m.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    Ok(ClassificationMetrics {
        accuracy: (m.true_pos + m.true_neg) as f64 / total as f64,
        sensitivity: ratio(m.true_pos, m.true_pos + m.false_neg),
        specificity: ratio(m.true_neg, m.true_neg + m.false_pos),
        f1: ratio(2 * m.true_pos, 2 * m.true_pos + m.false_pos + m.false_neg),
    })
}

/// Exact ROC AUC: `(concordant + tied / 2) / (positives * negatives)`,
/// computed via average ranks so ties are handled exactly.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<f64, MetricsError> {
    if labels.len() != scores.len() {
        return Err(MetricsError::LengthMismatch {
            labels: labels.len(),
            predictions: scores.len(),
        });
    }
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(MetricsError::NonFiniteScore(i));
        }
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.iter().filter(|&&l| l == 0).count();
    if positives + negatives != labels.len() {
        let bad = *labels.iter().find(|&&l| l > 1).unwrap();
        return Err(MetricsError::NonBinary(bad));
    }
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Average ranks across tied score groups, then sum the positives' ranks.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }

    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}
