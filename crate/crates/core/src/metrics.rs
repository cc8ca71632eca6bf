//! Nearest-prototype prediction and matched clustering accuracy.

use serde::{Deserialize, Serialize};

use crate::assignment::{assignment_total, max_weight_assignment};
use crate::numeric::{dot, DenseMatrix};

/// Index of the most similar prototype row; ties go to the lowest index.
pub fn predict(embeddings: &DenseMatrix, prototypes: &DenseMatrix) -> Vec<usize> {
    embeddings
        .row_iter()
        .map(|z| {
            let mut best = (0, f64::NEG_INFINITY);
            for (k, p) in prototypes.row_iter().enumerate() {
                let s = dot(z, p);
                if s > best.1 {
                    best = (k, s);
                }
            }
            best.0
        })
        .collect()
}

/// Slot × label count matrix over the listed nodes.
pub fn contingency(predicted: &[usize], labels: &[usize], subset: &[usize]) -> DenseMatrix {
    let rows = subset.iter().map(|&v| predicted[v] + 1).max().unwrap_or(0);
    let cols = subset.iter().map(|&v| labels[v] + 1).max().unwrap_or(0);
    let mut m = DenseMatrix::zeros(rows, cols);
    for &v in subset {
        let (r, c) = (predicted[v], labels[v]);
        m.set(r, c, m.get(r, c) + 1.0);
    }
    m
}

/// Percentage of `subset` correctly predicted under the best one-to-one
/// slot/label mapping for that subset alone. `None` for an empty subset.
pub fn hungarian_accuracy(predicted: &[usize], labels: &[usize], subset: &[usize]) -> Option<f64> {
    if subset.is_empty() {
        return None;
    }
    let m = contingency(predicted, labels, subset);
    let matched = assignment_total(&m, &max_weight_assignment(&m));
    Some(100.0 * matched / subset.len() as f64)
}

/// Harmonic mean of old and new accuracy; 0 when both are 0.
pub fn hrscore(old: f64, new: f64) -> f64 {
    if old + new == 0.0 {
        0.0
    } else {
        2.0 * old * new / (old + new)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub round: usize,
    pub old_acc: Option<f64>,
    pub new_acc: Option<f64>,
    pub all_acc: Option<f64>,
    pub hrscore: f64,
    pub num_prototypes: usize,
    pub num_novel: usize,
    pub num_stale: usize,
}

/// Old/New/All accuracies, each with its own matching, over the test nodes.
pub fn evaluate(predicted: &[usize], labels: &[usize], test: &[usize], is_known: impl Fn(usize) -> bool) -> (Option<f64>, Option<f64>, Option<f64>) {
    let (old, new): (Vec<usize>, Vec<usize>) = test.iter().partition(|&&v| is_known(labels[v]));
    (
        hungarian_accuracy(predicted, labels, &old),
        hungarian_accuracy(predicted, labels, &new),
        hungarian_accuracy(predicted, labels, test),
    )
}
