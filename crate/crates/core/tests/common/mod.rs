#![allow(dead_code)]

use std::path::PathBuf;

use fggcd_core::client::ClientData;
use fggcd_core::gnn::GcnModel;
use fggcd_core::graph::{load_graph, Graph, Partition, Role, SplitMasks};
use fggcd_core::numeric::{normalized, DenseMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn sbm_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/sbm300")
}

pub fn sbm() -> Graph {
    load_graph(sbm_dir()).expect("checked-in synthetic dataset")
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

pub fn unit_rows(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let v: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect();
            normalized(&v).unwrap()
        })
        .collect()
}

/// Eight nodes on a ring with two chords. Classes 0 and 1 are known, 2 is novel.
/// Nodes 0 and 2 are labeled, node 7 is validation, the rest are unlabeled.
pub struct Fixture {
    pub graph: Graph,
    pub data: ClientData,
    pub model: GcnModel,
}

pub fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 8;
    let features = random_matrix(n, 5, &mut rng);
    let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 0), (0, 4), (2, 6)];
    let labels = vec![0, 0, 1, 1, 2, 2, 0, 1];
    let graph = Graph::new("fixture", features, edges, labels, 3).unwrap();
    let partition = Partition::from_assignment(&graph, vec![0; n], 1).unwrap();
    let mut roles = vec![Role::Unlabeled; n];
    roles[0] = Role::LabeledTrain;
    roles[2] = Role::LabeledTrain;
    roles[7] = Role::Val;
    let masks = SplitMasks {
        known_classes: vec![0, 1],
        novel_classes: vec![2],
        roles,
    };
    let data = ClientData::new(0, &graph, partition.client(0), &masks).unwrap();
    let model = GcnModel::new(5, 6, 4, &mut rng);
    Fixture { graph, data, model }
}

/// Prototypes taken from the model's own embeddings so that some unlabeled
/// nodes are confidently assigned.
pub fn anchored_prototypes(f: &Fixture, rows: &[usize]) -> DenseMatrix {
    let z = f.model.embed(&f.data.adj, &f.data.propagated).unwrap();
    z.select_rows(rows)
}

/// Central differences of `loss` with respect to every entry of `w1` and `w2`.
pub fn finite_difference(
    model: &GcnModel,
    h: f64,
    mut loss: impl FnMut(&GcnModel) -> f64,
) -> (DenseMatrix, DenseMatrix) {
    let mut grads = Vec::new();
    for which in 0..2 {
        let base = if which == 0 { &model.w1.value } else { &model.w2.value };
        let mut g = DenseMatrix::zeros(base.rows(), base.cols());
        for r in 0..base.rows() {
            for c in 0..base.cols() {
                let mut plus = model.clone();
                let mut minus = model.clone();
                let (p, m) = if which == 0 {
                    (&mut plus.w1.value, &mut minus.w1.value)
                } else {
                    (&mut plus.w2.value, &mut minus.w2.value)
                };
                p.set(r, c, p.get(r, c) + h);
                m.set(r, c, m.get(r, c) - h);
                g.set(r, c, (loss(&plus) - loss(&minus)) / (2.0 * h));
            }
        }
        grads.push(g);
    }
    let w2 = grads.pop().unwrap();
    let w1 = grads.pop().unwrap();
    (w1, w2)
}

/// Largest entrywise `|a − b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &DenseMatrix, b: &DenseMatrix, floor: f64) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[allow(unused_imports)]
pub use grad::*;

mod grad {
    use fggcd_core::client::{
        compute_tpr, loss_gcl, loss_sup, loss_unsup, pseudo_labels, sample_negatives, score_tpr, GclSemantics,
        LossConfig, PseudoLabels,
    };
    use fggcd_core::gnn::GcnModel;
    use fggcd_core::numeric::{DenseMatrix, Tape, Var};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::{anchored_prototypes, finite_difference, fixture, max_relative_error, Fixture};

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Term {
        Sup,
        Unsup,
        Gcl,
        Total,
    }

    impl Term {
        pub const ALL: [Term; 4] = [Term::Sup, Term::Unsup, Term::Gcl, Term::Total];

        pub fn name(self) -> &'static str {
            match self {
                Term::Sup => "sup",
                Term::Unsup => "unsup",
                Term::Gcl => "gcl",
                Term::Total => "total",
            }
        }
    }

    /// Weights, masks, pseudo-labels and negatives evaluated once at the base point.
    pub struct Frozen {
        pub prototypes: DenseMatrix,
        pub pseudo: PseudoLabels,
        pub weights: Vec<f64>,
        pub semantics: GclSemantics,
        pub negatives: Vec<Vec<usize>>,
        pub cfg: LossConfig,
    }

    pub fn freeze(f: &Fixture) -> Frozen {
        let cfg = LossConfig::default();
        let prototypes = anchored_prototypes(f, &[3, 5, 1]);
        let z = f.model.embed(&f.data.adj, &f.data.propagated).unwrap();
        let tpr = score_tpr(&z, &f.data.neighbors, &prototypes, &cfg).unwrap();
        let weights = compute_tpr(&tpr.confidence, &tpr.smoothness);
        let pseudo = pseudo_labels(&z, &prototypes, &f.data.unlabeled, cfg.tau_sharp, cfg.alpha).unwrap();
        let mut semantics = GclSemantics {
            labels: pseudo.labels.clone(),
            confident: pseudo.mask.clone(),
        };
        for &(v, k) in &f.data.labeled {
            semantics.labels[v] = k;
            semantics.confident[v] = true;
        }
        let negatives = sample_negatives(&f.data.neighbors, cfg.negative_cap, &mut ChaCha8Rng::seed_from_u64(9));
        Frozen {
            prototypes,
            pseudo,
            weights,
            semantics,
            negatives,
            cfg,
        }
    }

    pub fn record(f: &Fixture, model: &GcnModel, frozen: &Frozen, term: Term) -> (Tape, Var, Var, Var) {
        let mut tape = Tape::new();
        let (w1, w2, z) = model.forward_on_tape(&mut tape, &f.data.adj, &f.data.propagated).unwrap();
        let c = &frozen.cfg;
        let loss = match term {
            Term::Sup => loss_sup(&mut tape, z, &frozen.prototypes, &f.data.labeled, c.tau).unwrap(),
            Term::Unsup => loss_unsup(
                &mut tape,
                z,
                &frozen.prototypes,
                &f.data.unlabeled,
                &frozen.pseudo,
                &frozen.weights,
                c.tau,
            )
            .unwrap(),
            Term::Gcl => loss_gcl(&mut tape, z, &f.data.neighbors, &frozen.negatives, &frozen.semantics, c.tau).unwrap(),
            Term::Total => {
                let s = loss_sup(&mut tape, z, &frozen.prototypes, &f.data.labeled, c.tau).unwrap();
                let u = loss_unsup(
                    &mut tape,
                    z,
                    &frozen.prototypes,
                    &f.data.unlabeled,
                    &frozen.pseudo,
                    &frozen.weights,
                    c.tau,
                )
                .unwrap();
                let g = loss_gcl(&mut tape, z, &f.data.neighbors, &frozen.negatives, &frozen.semantics, c.tau).unwrap();
                let g = tape.scale(g, c.beta);
                let su = tape.add(s, u).unwrap();
                tape.add(su, g).unwrap()
            }
        };
        (tape, w1, w2, loss)
    }

    pub fn term_value(f: &Fixture, model: &GcnModel, frozen: &Frozen, term: Term) -> f64 {
        let (tape, _, _, loss) = record(f, model, frozen, term);
        tape.scalar_value(loss)
    }

    /// Worst relative error of the tape gradient against central differences
    /// (step 1e-5) over both weight matrices.
    pub fn gradient_error(seed: u64, term: Term) -> f64 {
        let f = fixture(seed);
        let frozen = freeze(&f);
        let (tape, w1, w2, loss) = record(&f, &f.model, &frozen, term);
        let grads = tape.backward(loss).unwrap();
        let zeros = |m: &DenseMatrix| DenseMatrix::zeros(m.rows(), m.cols());
        let g1 = grads.get(w1).cloned().unwrap_or_else(|| zeros(&f.model.w1.value));
        let g2 = grads.get(w2).cloned().unwrap_or_else(|| zeros(&f.model.w2.value));
        let (n1, n2) = finite_difference(&f.model, 1e-5, |m| term_value(&f, m, &frozen, term));
        max_relative_error(&g1, &n1, 1e-6).max(max_relative_error(&g2, &n2, 1e-6))
    }
}

#[allow(unused_imports)]
pub use oracle::*;

/// Straightforward reference implementations used to cross-check the fast paths.
mod oracle {
    use fggcd_core::numeric::{dot, DenseMatrix};
    use fggcd_core::server::{cut_penalty, Dendrogram, PoolEntry};

    fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == items.len() {
            out.push(items.clone());
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permutations(items, k + 1, out);
            items.swap(k, i);
        }
    }

    /// Maximum over every permutation of a square matrix, summed in row order.
    pub fn brute_force_assignment(m: &DenseMatrix) -> f64 {
        let mut all = Vec::new();
        permutations(&mut (0..m.cols()).collect(), 0, &mut all);
        all.iter()
            .map(|p| p.iter().enumerate().fold(0.0, |acc, (r, &c)| acc + m.get(r, c)))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Average linkage recomputed from member pairs at every step. Returns merge heights.
    pub fn naive_average_linkage(points: &[Vec<f64>]) -> Vec<f64> {
        let d = |i: usize, j: usize| 1.0 - dot(&points[i], &points[j]);
        let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
        let mut heights = Vec::new();
        while clusters.len() > 1 {
            let mut best = (0, 1, f64::INFINITY);
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let mut s = 0.0;
                    for &i in &clusters[a] {
                        for &j in &clusters[b] {
                            s += d(i, j);
                        }
                    }
                    let avg = s / (clusters[a].len() * clusters[b].len()) as f64;
                    if avg < best.2 {
                        best = (a, b, avg);
                    }
                }
            }
            let merged = clusters.remove(best.1);
            clusters[best.0].extend(merged);
            heights.push(best.2);
        }
        heights
    }

    /// Silhouette straight from its definition; singletons score 0.
    pub fn pairwise_silhouette(dist: &[Vec<f64>], labels: &[usize]) -> f64 {
        let n = labels.len();
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut total = 0.0;
        for i in 0..n {
            let mut sums = vec![0.0; k];
            let mut counts = vec![0usize; k];
            for j in 0..n {
                if j != i {
                    sums[labels[j]] += dist[i][j];
                    counts[labels[j]] += 1;
                }
            }
            let own = labels[i];
            if counts[own] == 0 {
                continue;
            }
            let a = sums[own] / counts[own] as f64;
            let b = (0..k)
                .filter(|&c| c != own && counts[c] > 0)
                .map(|c| sums[c] / counts[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                total += (b - a) / m;
            }
        }
        total / n as f64
    }

    /// Labels after applying the first `m` merges, numbered by first appearance.
    pub fn prefix_labels(tree: &Dendrogram, m: usize) -> Vec<usize> {
        let n = tree.leaves;
        let mut parent: Vec<usize> = (0..n + tree.merges.len()).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            if p[x] != x {
                let r = find(p, p[x]);
                p[x] = r;
            }
            p[x]
        }
        for (i, merge) in tree.merges.iter().take(m).enumerate() {
            let (a, b) = (find(&mut parent, merge.left), find(&mut parent, merge.right));
            parent[a] = n + i;
            parent[b] = n + i;
        }
        let mut ids = std::collections::HashMap::new();
        (0..n)
            .map(|x| {
                let root = find(&mut parent, x);
                let next = ids.len();
                *ids.entry(root).or_insert(next)
            })
            .collect()
    }

    /// Best penalised silhouette over every merge prefix that ends between two
    /// distinct heights, with at least two clusters. Ties keep fewer clusters.
    pub fn exhaustive_cut(pool: &[PoolEntry], tree: &Dendrogram, num_known: usize, lambda: f64) -> Option<(f64, usize, Vec<usize>)> {
        let points: Vec<Vec<f64>> = pool.iter().map(|p| p.centroid.clone()).collect();
        let n = points.len();
        let dist: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 - dot(&points[i], &points[j]) }).collect())
            .collect();
        let mut best: Option<(f64, usize, Vec<usize>)> = None;
        for m in 0..tree.merges.len() {
            if m > 0 && tree.merges[m - 1].height >= tree.merges[m].height {
                continue;
            }
            let labels = prefix_labels(tree, m);
            let k = n - m;
            if k < 2 {
                continue;
            }
            let score = pairwise_silhouette(&dist, &labels) - cut_penalty(k, num_known, lambda);
            let better = match &best {
                None => true,
                Some((s, bk, _)) => score > *s || (score == *s && k < *bk),
            };
            if better {
                best = Some((score, k, labels));
            }
        }
        best
    }

    /// True when two labelings induce the same partition.
    pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
        a.len() == b.len() && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }
}

/// Between 2 and 12 unit vectors scattered around up to four planted directions.
pub fn random_pool(seed: u64) -> Vec<fggcd_core::server::PoolEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 6;
    let groups = rng.random_range(1..=4);
    let centers = unit_rows(groups, dim, &mut rng);
    let size = rng.random_range(2..=12);
    (0..size)
        .map(|i| {
            let c = &centers[rng.random_range(0..groups)];
            let spread = rng.random_range(0.05..0.6);
            let v: Vec<f64> = c.iter().map(|x| x + spread * rng.random_range(-1.0..1.0)).collect();
            fggcd_core::server::PoolEntry {
                centroid: normalized(&v).unwrap(),
                density: rng.random_range(6..40),
                avg_tpr: rng.random_range(0.0..1.0),
                client: i % 3,
            }
        })
        .collect()
}
