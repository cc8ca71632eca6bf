//! Average-linkage agglomeration over cosine distance and the penalised
//! silhouette cut.

use std::collections::BTreeSet;

use crate::numeric::{dot, normalized};

/// Merge heights below which two clusters sharing an origin client may not merge.
pub const CANNOT_LINK_HEIGHT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub centroid: Vec<f64>,
    pub density: usize,
    pub avg_tpr: f64,
    pub client: usize,
}

/// One agglomeration step. Leaves are `0..n`; merge `i` creates cluster `n + i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

/// `1 − aᵀb` for every pair.
pub fn cosine_distances(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[i][j] = 1.0 - dot(&points[i], &points[j]);
            }
        }
    }
    d
}

/// Average linkage via Lance–Williams updates. Among equal distances the pair
/// with the smallest cluster ids merges first. With `origins`, clusters sharing
/// an origin are kept apart until [`CANNOT_LINK_HEIGHT`].
pub fn dendrogram(points: &[Vec<f64>], origins: Option<&[usize]>) -> Dendrogram {
    let n = points.len();
    let base = cosine_distances(points);
    let total = 2 * n.max(1) - 1;
    let mut dist = vec![vec![0.0; total]; total];
    for i in 0..n {
        dist[i][..n].copy_from_slice(&base[i]);
    }
    let mut size = vec![1usize; total];
    let mut clients: Vec<BTreeSet<usize>> = (0..total)
        .map(|i| match origins {
            Some(o) if i < n => BTreeSet::from([o[i]]),
            _ => BTreeSet::new(),
        })
        .collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    while active.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let mut d = dist[a][b];
                if origins.is_some() && d < CANNOT_LINK_HEIGHT && !clients[a].is_disjoint(&clients[b]) {
                    d = CANNOT_LINK_HEIGHT;
                }
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let (height, a, b) = best;
        let new = n + merges.len();
        size[new] = size[a] + size[b];
        let (sa, sb) = (size[a] as f64, size[b] as f64);
        for &k in &active {
            if k != a && k != b {
                let d = (sa * dist[a][k] + sb * dist[b][k]) / (sa + sb);
                dist[new][k] = d;
                dist[k][new] = d;
            }
        }
        let merged: BTreeSet<usize> = clients[a].union(&clients[b]).copied().collect();
        clients[new] = merged;
        active.retain(|&k| k != a && k != b);
        active.push(new);
        merges.push(Merge {
            left: a,
            right: b,
            height,
            size: size[new],
        });
    }
    Dendrogram { leaves: n, merges }
}

impl Dendrogram {
    /// Flat labels after applying every merge strictly below `threshold`.
    /// Labels are numbered by first appearance in leaf order.
    pub fn cut_below(&self, threshold: f64) -> Vec<usize> {
        let n = self.leaves;
        let mut parent: Vec<usize> = (0..n + self.merges.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (i, m) in self.merges.iter().enumerate() {
            if m.height < threshold {
                let new = n + i;
                let (l, r) = (find(&mut parent, m.left), find(&mut parent, m.right));
                parent[l] = new;
                parent[r] = new;
            }
        }
        let mut ids = std::collections::HashMap::new();
        (0..n)
            .map(|i| {
                let root = find(&mut parent, i);
                let next = ids.len();
                *ids.entry(root).or_insert(next)
            })
            .collect()
    }

    /// Distinct merge heights, ascending.
    pub fn heights(&self) -> Vec<f64> {
        let mut h: Vec<f64> = self.merges.iter().map(|m| m.height).collect();
        h.sort_by(f64::total_cmp);
        h.dedup();
        h
    }
}

/// Mean silhouette from a distance matrix; members of singleton clusters score 0.
pub fn silhouette(dist: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = labels.len();
    if n == 0 {
        return 0.0;
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        if counts[own] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += dist[i][j];
            }
        }
        let a = sums[own] / (counts[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !b.is_finite() {
            continue;
        }
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

/// `λ · max(0, clusters − (known + 2))`
pub fn cut_penalty(num_clusters: usize, num_known: usize, lambda: f64) -> f64 {
    lambda * num_clusters.saturating_sub(num_known + 2) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutResult {
    /// Merges strictly below this height were applied.
    pub threshold: f64,
    pub labels: Vec<usize>,
    pub num_clusters: usize,
    pub score: f64,
    /// Density-weighted, unit-normalised cluster centres in label order.
    pub centers: Vec<Vec<f64>>,
}

/// Scores the cut just below every distinct merge height and keeps the best
/// penalised silhouette with at least two clusters; ties prefer fewer clusters.
pub fn optimal_cut(pool: &[PoolEntry], tree: &Dendrogram, num_known: usize, lambda: f64) -> Option<CutResult> {
    if pool.len() < 2 {
        return None;
    }
    let points: Vec<Vec<f64>> = pool.iter().map(|p| p.centroid.clone()).collect();
    let dist = cosine_distances(&points);
    let mut best: Option<CutResult> = None;
    for h in tree.heights() {
        let labels = tree.cut_below(h);
        let k = labels.iter().max().map_or(0, |m| m + 1);
        if k < 2 {
            continue;
        }
        let score = silhouette(&dist, &labels) - cut_penalty(k, num_known, lambda);
        let better = match &best {
            None => true,
            Some(b) => score > b.score || (score == b.score && k < b.num_clusters),
        };
        if better {
            best = Some(CutResult {
                threshold: h,
                labels,
                num_clusters: k,
                score,
                centers: Vec::new(),
            });
        }
    }
    let mut best = best?;
    let dim = points[0].len();
    best.centers = (0..best.num_clusters)
        .filter_map(|c| {
            let mut acc = vec![0.0; dim];
            for (entry, _) in pool.iter().zip(&best.labels).filter(|(_, &l)| l == c) {
                for (a, x) in acc.iter_mut().zip(&entry.centroid) {
                    *a += entry.density as f64 * x;
                }
            }
            normalized(&acc)
        })
        .collect();
    Some(best)
}
