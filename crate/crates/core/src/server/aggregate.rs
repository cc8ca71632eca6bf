use crate::client::{ClientReport, ClusterKind};
use crate::error::{FggcdError, Result};
use crate::gnn::GcnModel;
use crate::numeric::{normalized, DenseMatrix};

use super::memory::{GlobalMemory, KnownSlot};

/// `Σ_i (n_i / Σ n) · m_i`.
pub fn weighted_average(items: &[(&DenseMatrix, usize)]) -> Result<DenseMatrix> {
    let Some(&(first, _)) = items.first() else {
        return Err(FggcdError::InvalidArgument("nothing to aggregate".into()));
    };
    let total: usize = items.iter().map(|&(_, n)| n).sum();
    if total == 0 {
        return Err(FggcdError::InvalidArgument("aggregation weights sum to zero".into()));
    }
    let mut acc = DenseMatrix::zeros(first.rows(), first.cols());
    for &(m, n) in items {
        if m.shape() != first.shape() {
            return Err(FggcdError::Shape {
                op: "aggregate_weights",
                lhs: first.shape(),
                rhs: m.shape(),
            });
        }
        acc.axpy(n as f64 / total as f64, m)?;
    }
    Ok(acc)
}

/// Size-weighted FedAvg over the participating clients.
pub fn aggregate_weights(reports: &[ClientReport]) -> Result<GcnModel> {
    let w1: Vec<_> = reports.iter().map(|r| (&r.w1, r.num_nodes)).collect();
    let w2: Vec<_> = reports.iter().map(|r| (&r.w2, r.num_nodes)).collect();
    GcnModel::from_weights(weighted_average(&w1)?, weighted_average(&w2)?)
}

/// `normalize(Σ v·p / (Σ v + eps))`; `None` when the weights vanish.
pub fn weighted_prototype(contributions: &[(&[f64], f64)], eps: f64) -> Option<Vec<f64>> {
    let first = contributions.first()?;
    let total: f64 = contributions.iter().map(|&(_, v)| v).sum();
    if total <= 0.0 {
        return None;
    }
    let mut acc = vec![0.0; first.0.len()];
    for &(p, v) in contributions {
        for (a, x) in acc.iter_mut().zip(p) {
            *a += v * x;
        }
    }
    let denom = total + eps;
    acc.iter_mut().for_each(|a| *a /= denom);
    normalized(&acc)
}

/// Joint-weighted update of every known prototype from labeled class means
/// and known-tagged clusters. Classes without usable contributions keep
/// their previous prototype.
pub fn aggregate_prototypes(memory: &mut GlobalMemory, reports: &[ClientReport], eps: f64) {
    for (k, slot) in memory.known.iter_mut().enumerate() {
        let mut contributions: Vec<(&[f64], f64)> = Vec::new();
        for r in reports {
            for m in r.discovery.labeled_means.iter().filter(|m| m.known_index == k) {
                contributions.push((&m.mean, m.avg_tpr * m.count as f64));
            }
            for c in r.discovery.clusters.iter().filter(|c| c.kind == ClusterKind::Known(k)) {
                contributions.push((&c.centroid, c.avg_tpr * c.density as f64));
            }
        }
        if let Some(p) = weighted_prototype(&contributions, eps) {
            slot.prototype = p;
        }
    }
}

/// Known slots from round-0 labeled class means, weighted by labeled count
/// times reliability. Falls back to counts alone when every reliability is zero.
pub fn initialize_memory(reports: &[ClientReport], known_classes: &[usize], dim: usize, eps: f64) -> Result<GlobalMemory> {
    let mut known = Vec::with_capacity(known_classes.len());
    for (k, &class) in known_classes.iter().enumerate() {
        let means: Vec<_> = reports
            .iter()
            .flat_map(|r| r.discovery.labeled_means.iter())
            .filter(|m| m.known_index == k)
            .collect();
        if means.is_empty() {
            return Err(FggcdError::MissingKnownClass(class));
        }
        let joint: Vec<(&[f64], f64)> = means.iter().map(|m| (m.mean.as_slice(), m.avg_tpr * m.count as f64)).collect();
        let counts: Vec<(&[f64], f64)> = means.iter().map(|m| (m.mean.as_slice(), m.count as f64)).collect();
        let prototype = weighted_prototype(&joint, eps)
            .or_else(|| weighted_prototype(&counts, eps))
            .ok_or(FggcdError::MissingKnownClass(class))?;
        known.push(KnownSlot {
            slot: k,
            class,
            prototype,
        });
    }
    Ok(GlobalMemory {
        dim,
        round: 0,
        known,
        novel: Vec::new(),
    })
}
