use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, Partition};
use crate::error::{FggcdError, Result};

/// Share of each (client, known class) held out for validation.
pub const VAL_FRACTION: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    LabeledTrain,
    /// Unlabeled training node; doubles as a test node (transductive setting).
    Unlabeled,
    Val,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMasks {
    /// Ascending class ids.
    pub known_classes: Vec<usize>,
    pub novel_classes: Vec<usize>,
    pub roles: Vec<Role>,
}

impl SplitMasks {
    pub fn is_known(&self, class: usize) -> bool {
        self.known_classes.binary_search(&class).is_ok()
    }

    pub fn count(&self, role: Role) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }
}

/// Known/novel class split followed by per-client, per-known-class masking.
///
/// A seeded shuffle of class ids decides the first `⌈|Y|/2⌉` (known). Within each
/// (client, known class) group of `n` nodes, `round(label_rate·n)` (at least one)
/// become labeled and `round(0.4·n)` validation; the rest, together with every
/// novel-class node, are unlabeled.
pub fn gcd_split(g: &Graph, partition: &Partition, label_rate: f64, seed: u64) -> Result<SplitMasks> {
    if !(label_rate > 0.0 && label_rate <= 1.0) {
        return Err(FggcdError::InvalidArgument(format!(
            "label rate must be in (0, 1], got {label_rate}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_classes = g.num_classes();
    let mut classes: Vec<usize> = (0..num_classes).collect();
    classes.shuffle(&mut rng);
    let num_known = num_classes.div_ceil(2);
    let mut known_classes = classes[..num_known].to_vec();
    let mut novel_classes = classes[num_known..].to_vec();
    known_classes.sort_unstable();
    novel_classes.sort_unstable();

    let mut roles = vec![Role::Unlabeled; g.num_nodes()];
    let labels = g.labels();
    for client in partition.clients() {
        for &class in &known_classes {
            let mut members: Vec<usize> = client.nodes.iter().copied().filter(|&v| labels[v] == class).collect();
            if members.is_empty() {
                continue;
            }
            members.shuffle(&mut rng);
            let (labeled, val) = role_counts(members.len(), label_rate);
            for &v in &members[..labeled] {
                roles[v] = Role::LabeledTrain;
            }
            for &v in &members[labeled..labeled + val] {
                roles[v] = Role::Val;
            }
        }
    }
    Ok(SplitMasks {
        known_classes,
        novel_classes,
        roles,
    })
}

/// (labeled, val) counts for a nonempty group of `n`.
fn role_counts(n: usize, label_rate: f64) -> (usize, usize) {
    let labeled = ((label_rate * n as f64).round() as usize).clamp(1, n);
    let val = ((VAL_FRACTION * n as f64).round() as usize).min(n - labeled);
    (labeled, val)
}

/// Demotes `round(rate · |labeled|)` uniformly chosen labeled nodes to
/// unlabeled, independently per client.
pub fn sparsify_labels(masks: &SplitMasks, partition: &Partition, rate: f64, seed: u64) -> Result<SplitMasks> {
    if !(0.0..1.0).contains(&rate) {
        return Err(FggcdError::InvalidArgument(format!(
            "sparsity rate must be in [0, 1), got {rate}"
        )));
    }
    let mut out = masks.clone();
    if rate == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for client in partition.clients() {
        let mut labeled: Vec<usize> = client
            .nodes
            .iter()
            .copied()
            .filter(|&v| masks.roles[v] == Role::LabeledTrain)
            .collect();
        labeled.shuffle(&mut rng);
        let drop = (rate * labeled.len() as f64).round() as usize;
        for &v in &labeled[..drop] {
            out.roles[v] = Role::Unlabeled;
        }
    }
    Ok(out)
}
