//! Prototype alignment and neighbourhood contrastive losses recorded on a [`Tape`].

use rand::seq::index::sample;
use rand::Rng;

use crate::error::Result;
use crate::numeric::{argmax, DenseMatrix, Tape, Var};

/// Positive similarity assigned to confident edges whose endpoints disagree.
pub const TRUNCATED_POSITIVE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabels {
    /// Per node, including labeled and validation nodes.
    pub labels: Vec<usize>,
    /// Max of the sharpened softmax, per node.
    pub confidence: Vec<f64>,
    /// Only unlabeled nodes can be selected.
    pub mask: Vec<bool>,
    /// Threshold used for the mask; `None` when there are no unlabeled nodes.
    pub gamma: Option<f64>,
}

/// `max(0.5, μ + α·σ)` over the given confidences (population σ).
pub fn dynamic_threshold(confidences: &[f64], alpha: f64) -> f64 {
    if confidences.is_empty() {
        return 0.5;
    }
    let n = confidences.len() as f64;
    let mu = confidences.iter().sum::<f64>() / n;
    let var = confidences.iter().map(|q| (q - mu) * (q - mu)).sum::<f64>() / n;
    (mu + alpha * var.sqrt()).max(0.5)
}

/// Pseudo-labels from the sharpened head and the dynamic confidence mask.
pub fn pseudo_labels(
    z: &DenseMatrix,
    prototypes: &DenseMatrix,
    unlabeled: &[usize],
    tau_sharp: f64,
    alpha: f64,
) -> Result<PseudoLabels> {
    let sharp = crate::gnn::logits(z, prototypes, 1.0)?.softmax_rows(tau_sharp)?;
    let labels: Vec<usize> = sharp.row_iter().map(argmax).collect();
    let confidence: Vec<f64> = sharp.row_iter().zip(&labels).map(|(r, &l)| r[l]).collect();
    let mut mask = vec![false; z.rows()];
    let gamma = if unlabeled.is_empty() {
        None
    } else {
        let q: Vec<f64> = unlabeled.iter().map(|&v| confidence[v]).collect();
        let gamma = dynamic_threshold(&q, alpha);
        for &v in unlabeled {
            mask[v] = confidence[v] > gamma;
        }
        Some(gamma)
    };
    Ok(PseudoLabels {
        labels,
        confidence,
        mask,
        gamma,
    })
}

fn zero(tape: &mut Tape) -> Var {
    tape.constant(DenseMatrix::scalar(0.0))
}

fn log_probs(tape: &mut Tape, z: Var, prototypes: &DenseMatrix, tau: f64) -> Result<Var> {
    let p = tape.constant(prototypes.clone());
    let logits = tape.matmul_t(z, p)?;
    let logits = tape.scale(logits, 1.0 / tau);
    Ok(tape.log_softmax_rows(logits))
}

/// Mean cross-entropy of the prototype classifier over `(node, target)` pairs.
pub fn loss_sup(
    tape: &mut Tape,
    z: Var,
    prototypes: &DenseMatrix,
    labeled: &[(usize, usize)],
    tau: f64,
) -> Result<Var> {
    if labeled.is_empty() {
        log::debug!("no labeled nodes; supervised term is zero");
        return Ok(zero(tape));
    }
    let lp = log_probs(tape, z, prototypes, tau)?;
    let (n, c) = tape.value(lp).shape();
    let mut weights = DenseMatrix::zeros(n, c);
    let scale = -1.0 / labeled.len() as f64;
    for &(v, y) in labeled {
        weights.set(v, y, weights.get(v, y) + scale);
    }
    tape.weighted_sum(lp, weights)
}

/// `(1/|U|) Σ w_v·M_v·CE(v, ŷ_v)` with the weights and mask held constant.
pub fn loss_unsup(
    tape: &mut Tape,
    z: Var,
    prototypes: &DenseMatrix,
    unlabeled: &[usize],
    pseudo: &PseudoLabels,
    weights: &[f64],
    tau: f64,
) -> Result<Var> {
    let active: Vec<usize> = unlabeled
        .iter()
        .copied()
        .filter(|&v| pseudo.mask[v] && weights[v] != 0.0)
        .collect();
    if active.is_empty() {
        return Ok(zero(tape));
    }
    let lp = log_probs(tape, z, prototypes, tau)?;
    let (n, c) = tape.value(lp).shape();
    let mut coef = DenseMatrix::zeros(n, c);
    let scale = -1.0 / unlabeled.len() as f64;
    for v in active {
        coef.set(v, pseudo.labels[v], scale * weights[v]);
    }
    tape.weighted_sum(lp, coef)
}

/// Per-node semantic state for the contrastive term.
#[derive(Debug, Clone, PartialEq)]
pub struct GclSemantics {
    pub labels: Vec<usize>,
    pub confident: Vec<bool>,
}

/// Up to `cap` non-neighbours of every non-isolated node, sampled without replacement.
pub fn sample_negatives<R: Rng>(neighbors: &[Vec<usize>], cap: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let n = neighbors.len();
    neighbors
        .iter()
        .enumerate()
        .map(|(v, nbrs)| {
            if nbrs.is_empty() {
                return Vec::new();
            }
            let pool: Vec<usize> = (0..n).filter(|&u| u != v && nbrs.binary_search(&u).is_err()).collect();
            if pool.len() <= cap {
                pool
            } else {
                let mut picked: Vec<usize> = sample(rng, pool.len(), cap).into_iter().map(|i| pool[i]).collect();
                picked.sort_unstable();
                picked
            }
        })
        .collect()
}

/// Neighbourhood InfoNCE: mean over nodes of the mean over neighbours of
/// `−log(s_pos / (s_pos + Σ s_neg))`, with `s = exp(zᵀz'/τ)` and truncated
/// positives for confident edges whose endpoints carry different labels.
/// `neighbors` lists must be sorted.
pub fn loss_gcl(
    tape: &mut Tape,
    z: Var,
    neighbors: &[Vec<usize>],
    negatives: &[Vec<usize>],
    semantics: &GclSemantics,
    tau: f64,
) -> Result<Var> {
    let n = neighbors.len();
    let pairs: usize = neighbors.iter().map(Vec::len).sum();
    if pairs == 0 {
        return Ok(zero(tape));
    }
    let width = 1 + negatives.iter().map(Vec::len).max().unwrap_or(0);
    let mut indices = Vec::with_capacity(pairs * width);
    let mut mask = DenseMatrix::zeros(pairs, width);
    let mut offset = DenseMatrix::zeros(pairs, width);
    let mut pos_weight = DenseMatrix::zeros(pairs, width);
    let mut den_weight = DenseMatrix::zeros(pairs, 1);
    let mut constant = 0.0;

    let mut p = 0;
    for (v, nbrs) in neighbors.iter().enumerate() {
        let wt = 1.0 / (n as f64 * nbrs.len() as f64);
        for &u in nbrs {
            let truncated = semantics.confident[v]
                && semantics.confident[u]
                && semantics.labels[v] != semantics.labels[u];
            indices.push(v * n + u);
            if truncated {
                offset.set(p, 0, TRUNCATED_POSITIVE);
                constant -= wt * TRUNCATED_POSITIVE.ln();
            } else {
                mask.set(p, 0, 1.0);
                pos_weight.set(p, 0, -wt);
            }
            for (k, &neg) in negatives[v].iter().enumerate() {
                indices.push(v * n + neg);
                mask.set(p, k + 1, 1.0);
            }
            indices.extend(std::iter::repeat_n(v * n + v, width - 1 - negatives[v].len()));
            den_weight.set(p, 0, wt);
            p += 1;
        }
    }

    let sim = tape.matmul_t(z, z)?;
    let sim = tape.scale(sim, 1.0 / tau);
    let g = tape.gather(sim, indices, pairs, width)?;
    let e = tape.exp(g);
    let mask = tape.constant(mask);
    let masked = tape.mul(e, mask)?;
    let offset = tape.constant(offset);
    let terms = tape.add(masked, offset)?;
    let den = tape.row_sum(terms);
    let log_den = tape.log(den)?;
    let den_part = tape.weighted_sum(log_den, den_weight)?;
    let pos_part = tape.weighted_sum(g, pos_weight)?;
    let total = tape.add(den_part, pos_part)?;
    Ok(tape.add_scalar(total, constant))
}
