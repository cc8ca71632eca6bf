use crate::assignment::max_weight_assignment;
use crate::numeric::{dot, normalized, DenseMatrix};

use super::memory::GlobalMemory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub candidate: usize,
    pub history: usize,
    pub similarity: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub matches: Vec<Match>,
    /// `max(τ_base, mean S)`; `None` when either side is empty.
    pub threshold: Option<f64>,
}

impl MatchResult {
    pub fn valid_count(&self) -> usize {
        self.matches.iter().filter(|m| m.valid).count()
    }
}

pub fn similarity_matrix(a: &[Vec<f64>], b: &[Vec<f64>]) -> DenseMatrix {
    let mut s = DenseMatrix::zeros(a.len(), b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            s.set(i, j, dot(x, y));
        }
    }
    s
}

/// Maximum-similarity one-to-one matching of candidates to history. A match
/// is valid when its cosine exceeds both `tau_base` and the mean of the matrix.
pub fn match_prototypes(candidates: &[Vec<f64>], history: &[Vec<f64>], tau_base: f64) -> MatchResult {
    if candidates.is_empty() || history.is_empty() {
        return MatchResult {
            matches: Vec::new(),
            threshold: None,
        };
    }
    let s = similarity_matrix(candidates, history);
    let threshold = tau_base.max(s.sum() / (s.rows() * s.cols()) as f64);
    let matches = max_weight_assignment(&s)
        .into_iter()
        .map(|(r, c)| {
            let similarity = s.get(r, c);
            Match {
                candidate: r,
                history: c,
                similarity,
                valid: similarity > threshold,
            }
        })
        .collect();
    MatchResult {
        matches,
        threshold: Some(threshold),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoutingSummary {
    pub updated: usize,
    pub appended: usize,
}

/// EMA update of validly matched slots; every other candidate becomes a new slot.
pub fn route_memory(
    memory: &mut GlobalMemory,
    candidates: &[Vec<f64>],
    result: &MatchResult,
    rho: f64,
    round: usize,
) -> RoutingSummary {
    let mut routed = vec![false; candidates.len()];
    let mut summary = RoutingSummary::default();
    for m in result.matches.iter().filter(|m| m.valid) {
        let slot = &mut memory.novel[m.history];
        let mixed: Vec<f64> = slot
            .prototype
            .iter()
            .zip(&candidates[m.candidate])
            .map(|(h, c)| rho * h + (1.0 - rho) * c)
            .collect();
        if let Some(p) = normalized(&mixed) {
            slot.prototype = p;
        }
        slot.last_matched_round = Some(round);
        slot.matches += 1;
        routed[m.candidate] = true;
        summary.updated += 1;
    }
    for (cand, done) in candidates.iter().zip(routed) {
        if !done {
            memory.push_novel(cand.clone(), round);
            summary.appended += 1;
        }
    }
    summary
}
