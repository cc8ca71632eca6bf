use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numeric::{dot, normalized, DenseMatrix};

pub const KMEANS_MAX_ITER: usize = 50;
pub const KMEANS_TOL: f64 = 1e-6;

/// `max(2, min(k_max, ⌊unlabeled/3⌋))`
pub fn relaxed_cluster_count(unlabeled: usize, k_max: usize) -> usize {
    (unlabeled / 3).min(k_max).max(2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: DenseMatrix,
    pub assignment: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &DenseMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.row_iter().enumerate() {
        let d = sq_dist(point, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm from a k-means++ seeding. Empty clusters keep their
/// previous centroid.
pub fn kmeans<R: Rng>(points: &DenseMatrix, k: usize, max_iter: usize, tol: f64, rng: &mut R) -> KMeans {
    let n = points.rows();
    let k = k.min(n);
    if k == 0 {
        return KMeans {
            centroids: DenseMatrix::zeros(0, points.cols()),
            assignment: vec![0; n],
            inertia: 0.0,
        };
    }
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.row_iter().map(|p| sq_dist(p, points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, p) in points.row_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points.row(next)));
        }
    }
    let mut centroids = points.select_rows(&chosen);
    let mut assignment = vec![0; n];

    for _ in 0..max_iter {
        for (i, p) in points.row_iter().enumerate() {
            assignment[i] = nearest(p, &centroids).0;
        }
        let mut sums = DenseMatrix::zeros(k, points.cols());
        let mut counts = vec![0usize; k];
        for (i, p) in points.row_iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, x) in sums.row_mut(assignment[i]).iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            let new: Vec<f64> = sums.row(c).iter().map(|s| s * inv).collect();
            shift = shift.max(sq_dist(&new, centroids.row(c)).sqrt());
            centroids.row_mut(c).copy_from_slice(&new);
        }
        if shift < tol {
            break;
        }
    }
    let mut inertia = 0.0;
    for (i, p) in points.row_iter().enumerate() {
        let (c, d) = nearest(p, &centroids);
        assignment[i] = c;
        inertia += d;
    }
    KMeans {
        centroids,
        assignment,
        inertia,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterKind {
    /// Index into the known prototype list.
    Known(usize),
    Novel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalCluster {
    pub centroid: Vec<f64>,
    pub density: usize,
    pub avg_tpr: f64,
    pub kind: ClusterKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMean {
    pub known_index: usize,
    pub mean: Vec<f64>,
    pub count: usize,
    pub avg_tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalDiscovery {
    pub clusters: Vec<LocalCluster>,
    pub client_avg_tpr: f64,
    pub labeled_means: Vec<LabeledMean>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscoveryConfig {
    pub tau_base: f64,
    pub tau_density: usize,
    pub k_max: usize,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            tau_base: 0.3,
            tau_density: 5,
            k_max: 10,
        }
    }
}

/// Unit-normalised per-class means of labeled embeddings, ascending class index.
pub fn labeled_class_means(z: &DenseMatrix, targets: &[usize], tpr: &[f64]) -> Vec<LabeledMean> {
    let mut groups: std::collections::BTreeMap<usize, (Vec<f64>, usize, f64)> = Default::default();
    for (i, &k) in targets.iter().enumerate() {
        let entry = groups.entry(k).or_insert_with(|| (vec![0.0; z.cols()], 0, 0.0));
        for (s, x) in entry.0.iter_mut().zip(z.row(i)) {
            *s += x;
        }
        entry.1 += 1;
        entry.2 += tpr[i];
    }
    groups
        .into_iter()
        .filter_map(|(known_index, (sum, count, tpr_sum))| {
            normalized(&sum).map(|mean| LabeledMean {
                known_index,
                mean,
                count,
                avg_tpr: tpr_sum / count as f64,
            })
        })
        .collect()
}

/// K-means over unlabeled embeddings followed by known/novel tagging.
///
/// A cluster is tagged known when its best cosine to a known prototype
/// exceeds `tau_base` and is at least the mean of those best cosines over all
/// clusters. Other clusters survive as novel only with more than
/// `tau_density` members.
#[allow(clippy::too_many_arguments)]
pub fn local_discover<R: Rng>(
    z_unlabeled: &DenseMatrix,
    tpr_unlabeled: &[f64],
    z_labeled: &DenseMatrix,
    targets: &[usize],
    tpr_labeled: &[f64],
    known_prototypes: &DenseMatrix,
    client_avg_tpr: f64,
    cfg: &DiscoveryConfig,
    rng: &mut R,
) -> LocalDiscovery {
    let labeled_means = labeled_class_means(z_labeled, targets, tpr_labeled);
    let mut out = LocalDiscovery {
        clusters: Vec::new(),
        client_avg_tpr,
        labeled_means,
    };
    let n = z_unlabeled.rows();
    if n < 2 {
        return out;
    }
    let k = relaxed_cluster_count(n, cfg.k_max);
    let km = kmeans(z_unlabeled, k, KMEANS_MAX_ITER, KMEANS_TOL, rng);

    let mut candidates = Vec::new();
    for c in 0..km.centroids.rows() {
        let members: Vec<usize> = (0..n).filter(|&i| km.assignment[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let Some(centroid) = normalized(km.centroids.row(c)) else {
            continue;
        };
        let avg_tpr = members.iter().map(|&i| tpr_unlabeled[i]).sum::<f64>() / members.len() as f64;
        let (best, sim) = best_match(&centroid, known_prototypes);
        candidates.push((centroid, members.len(), avg_tpr, best, sim));
    }
    if candidates.is_empty() {
        return out;
    }
    let mean_sim = candidates.iter().map(|c| c.4).sum::<f64>() / candidates.len() as f64;
    for (centroid, density, avg_tpr, best, sim) in candidates {
        let kind = if sim > cfg.tau_base && sim >= mean_sim {
            ClusterKind::Known(best)
        } else if density > cfg.tau_density {
            ClusterKind::Novel
        } else {
            continue;
        };
        out.clusters.push(LocalCluster {
            centroid,
            density,
            avg_tpr,
            kind,
        });
    }
    out
}

fn best_match(v: &[f64], prototypes: &DenseMatrix) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, p) in prototypes.row_iter().enumerate() {
        let s = dot(v, p);
        if s > best.1 {
            best = (k, s);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{norm, EPS};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn cluster_count_examples() {
        assert_eq!(relaxed_cluster_count(30, 10), 10);
        assert_eq!(relaxed_cluster_count(5, 10), 2);
        assert_eq!(relaxed_cluster_count(300, 8), 8);
    }

    fn blobs(rng: &mut ChaCha8Rng) -> (DenseMatrix, Vec<Vec<f64>>) {
        let centers = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let mut rows = Vec::new();
        for c in &centers {
            for _ in 0..20 {
                let p: Vec<f64> = c
                    .iter()
                    .map(|x| {
                        let g: f64 = StandardNormal.sample(&mut *rng);
                        x + 0.05 * g
                    })
                    .collect();
                rows.push(p);
            }
        }
        let m = DenseMatrix::from_rows(&rows).unwrap().l2_normalize_rows(EPS);
        let means = (0..2)
            .map(|b| {
                let mut s = vec![0.0; 3];
                for i in b * 20..(b + 1) * 20 {
                    for (acc, x) in s.iter_mut().zip(m.row(i)) {
                        *acc += x;
                    }
                }
                s.iter().map(|x| x / 20.0).collect()
            })
            .collect();
        (m, means)
    }

    #[test]
    fn two_blobs_recover_means_and_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (points, means) = blobs(&mut rng);
        let km = kmeans(&points, 2, KMEANS_MAX_ITER, KMEANS_TOL, &mut rng);
        for mean in &means {
            let closest = km
                .centroids
                .row_iter()
                .map(|c| sq_dist(c, mean).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(closest < 1e-6, "{closest}");
        }
        let best = (0..50)
            .map(|s| kmeans(&points, 2, KMEANS_MAX_ITER, KMEANS_TOL, &mut ChaCha8Rng::seed_from_u64(100 + s)).inertia)
            .fold(f64::INFINITY, f64::min);
        assert!(km.inertia <= best * 1.01);
    }

    #[test]
    fn collapsed_on_known_prototype_is_one_known_cluster() {
        let proto = DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let z = DenseMatrix::from_rows(&[[0.0, 1.0]; 9]).unwrap();
        let d = local_discover(
            &z,
            &[0.5; 9],
            &DenseMatrix::zeros(0, 2),
            &[],
            &[],
            &proto,
            0.5,
            &DiscoveryConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        assert_eq!(d.clusters.len(), 1);
        assert_eq!(d.clusters[0].kind, ClusterKind::Known(0));
        assert_eq!(d.clusters[0].density, 9);
    }

    #[test]
    fn small_novel_cluster_is_discarded() {
        let proto = DenseMatrix::from_rows(&[[1.0, 0.0, 0.0]]).unwrap();
        let mut rows = vec![vec![1.0, 0.0, 0.0]; 9];
        rows.extend(vec![vec![0.0, 0.0, 1.0]; 5]);
        let z = DenseMatrix::from_rows(&rows).unwrap();
        let cfg = DiscoveryConfig {
            k_max: 2,
            ..Default::default()
        };
        let d = local_discover(&z, &[1.0; 14], &DenseMatrix::zeros(0, 3), &[], &[], &proto, 1.0, &cfg, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(d.clusters.len(), 1);
        assert_eq!(d.clusters[0].kind, ClusterKind::Known(0));

        rows = vec![vec![1.0, 0.0, 0.0]; 9];
        rows.extend(vec![vec![0.0, 0.0, 1.0]; 6]);
        let z = DenseMatrix::from_rows(&rows).unwrap();
        let d = local_discover(&z, &[1.0; 15], &DenseMatrix::zeros(0, 3), &[], &[], &proto, 1.0, &cfg, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(d.clusters.len(), 2);
        assert!(d.clusters.iter().any(|c| c.kind == ClusterKind::Novel && c.density == 6));
    }

    #[test]
    fn tiny_unlabeled_set_still_reports_labeled_means() {
        let proto = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let zl = DenseMatrix::from_rows(&[[3.0, 4.0], [3.0, 4.0], [0.0, 2.0]]).unwrap();
        let d = local_discover(
            &DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap(),
            &[1.0],
            &zl,
            &[0, 0, 1],
            &[0.2, 0.4, 1.0],
            &proto,
            0.5,
            &DiscoveryConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert!(d.clusters.is_empty());
        assert_eq!(d.labeled_means.len(), 2);
        assert_eq!(d.labeled_means[0].count, 2);
        assert!((d.labeled_means[0].avg_tpr - 0.3).abs() < 1e-12);
        assert!((d.labeled_means[0].mean[0] - 0.6).abs() < 1e-12);
        assert!((norm(&d.labeled_means[1].mean) - 1.0).abs() < 1e-12);
    }
}
