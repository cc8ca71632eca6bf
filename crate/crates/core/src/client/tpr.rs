//! Topology reliability: prediction confidence times neighbourhood smoothness.

use crate::numeric::{dot, DenseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct TprScores {
    pub confidence: Vec<f64>,
    pub smoothness: Vec<f64>,
    pub weight: Vec<f64>,
}

impl TprScores {
    pub fn new(confidence: Vec<f64>, smoothness: Vec<f64>) -> Self {
        let weight = compute_tpr(&confidence, &smoothness);
        Self {
            confidence,
            smoothness,
            weight,
        }
    }

    pub fn mean_weight(&self) -> f64 {
        mean(&self.weight)
    }
}

/// `1 − H(p)/max(log C, eps)` per row, clamped to `[0, 1]`.
pub fn compute_confidence(probs: &DenseMatrix, eps: f64) -> Vec<f64> {
    let denom = (probs.cols() as f64).ln().max(eps);
    probs
        .row_iter()
        .map(|p| {
            let h: f64 = -p.iter().map(|&x| x * (x + eps).ln()).sum::<f64>();
            (1.0 - h / denom).clamp(0.0, 1.0)
        })
        .collect()
}

/// Mean positive cosine to neighbours; isolated nodes score 0.
pub fn compute_smoothness(z: &DenseMatrix, neighbors: &[Vec<usize>]) -> Vec<f64> {
    neighbors
        .iter()
        .enumerate()
        .map(|(v, nbrs)| {
            let total: f64 = nbrs.iter().map(|&u| dot(z.row(v), z.row(u)).max(0.0)).sum();
            total / nbrs.len().max(1) as f64
        })
        .collect()
}

pub fn compute_tpr(confidence: &[f64], smoothness: &[f64]) -> Vec<f64> {
    confidence.iter().zip(smoothness).map(|(c, s)| c * s).collect()
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Symmetric adjacency lists from an undirected local edge list.
pub fn neighbor_lists(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::EPS;
    use proptest::prelude::*;

    #[test]
    fn confidence_examples() {
        let one_hot = DenseMatrix::from_rows(&[[0.0, 1.0, 0.0]]).unwrap();
        assert!(compute_confidence(&one_hot, EPS)[0] >= 1.0 - 1e-6);

        let uniform = DenseMatrix::filled(1, 4, 0.25);
        assert!(compute_confidence(&uniform, EPS)[0].abs() < 1e-6);

        let two = DenseMatrix::from_rows(&[[0.7, 0.3]]).unwrap();
        let h = -(0.7f64 * 0.7f64.ln() + 0.3 * 0.3f64.ln());
        assert!((h - 0.6109).abs() < 1e-4);
        let expected = 1.0 - h / 2f64.ln();
        let got = compute_confidence(&two, EPS)[0];
        assert!((got - expected).abs() < 1e-6);
        assert!((got - 0.1187).abs() < 1e-4);
    }

    #[test]
    fn single_class_is_fully_confident() {
        let p = DenseMatrix::filled(3, 1, 1.0);
        assert!(compute_confidence(&p, EPS).iter().all(|&c| c == 1.0));
    }

    #[test]
    fn smoothness_examples() {
        let z = DenseMatrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]).unwrap();
        let nbrs = neighbor_lists(3, &[(0, 1), (0, 2)]);
        assert_eq!(compute_smoothness(&z, &nbrs)[0], 1.0);

        let z = DenseMatrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        assert_eq!(compute_smoothness(&z, &neighbor_lists(2, &[(0, 1)]))[0], 0.0);

        // hub 0 with leaf cosines 0.8 and 0.4
        let z = DenseMatrix::from_rows(&[
            [1.0, 0.0],
            [0.8, 0.6],
            [0.4, (1.0f64 - 0.16).sqrt()],
        ])
        .unwrap();
        let s = compute_smoothness(&z, &neighbor_lists(3, &[(0, 1), (0, 2)]));
        assert!((s[0] - 0.6).abs() < 1e-12);

        let isolated = compute_smoothness(&z, &neighbor_lists(3, &[]));
        assert_eq!(isolated, vec![0.0; 3]);
    }

    #[test]
    fn tpr_examples() {
        assert_eq!(compute_tpr(&[1.0, 0.5, 0.6], &[1.0, 0.0, 0.5]), vec![1.0, 0.0, 0.3]);
    }

    proptest! {
        #[test]
        fn tpr_in_unit_interval(
            logits in prop::collection::vec(-20.0f64..20.0, 12),
            coords in prop::collection::vec(-1.0f64..1.0, 8),
        ) {
            let probs = DenseMatrix::from_vec(4, 3, logits).unwrap().softmax_rows(0.5).unwrap();
            let conf = compute_confidence(&probs, EPS);
            let z = DenseMatrix::from_vec(4, 2, coords).unwrap().l2_normalize_rows(EPS);
            let smooth = compute_smoothness(&z, &neighbor_lists(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]));
            let tpr = TprScores::new(conf, smooth);
            for i in 0..4 {
                prop_assert!((0.0..=1.0).contains(&tpr.confidence[i]));
                prop_assert!((0.0..=1.0).contains(&tpr.smoothness[i]));
                prop_assert!((0.0..=1.0).contains(&tpr.weight[i]));
                if tpr.confidence[i] == 0.0 || tpr.smoothness[i] == 0.0 {
                    prop_assert_eq!(tpr.weight[i], 0.0);
                }
            }
        }
    }
}
