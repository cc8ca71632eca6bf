mod common;

use common::{
    brute_force_assignment, exhaustive_cut, naive_average_linkage, random_matrix, random_pool, same_partition, sbm,
    unit_rows,
};
use fggcd_core::assignment::{assignment_total, max_weight_assignment};
use fggcd_core::client::{local_discover, pseudo_labels, score_tpr, ClusterKind, DiscoveryConfig, LossConfig};
use fggcd_core::experiment::derive_seed;
use fggcd_core::graph::{gcd_split, louvain_partition, Role};
use fggcd_core::numeric::DenseMatrix;
use fggcd_core::server::{dendrogram, optimal_cut};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    DenseMatrix::from_rows(&unit_rows(rows, cols, &mut ChaCha8Rng::seed_from_u64(seed))).unwrap()
}

fn random_neighbors(n: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = vec![Vec::new(); n];
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(0.3) {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
    }
    adj
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reliability_scores_stay_in_unit_interval(n in 2usize..20, c in 1usize..6, seed in any::<u64>()) {
        let z = unit_matrix(n, 4, seed);
        let p = unit_matrix(c, 4, seed ^ 1);
        let tpr = score_tpr(&z, &random_neighbors(n, seed), &p, &LossConfig::default()).unwrap();
        for s in tpr.confidence.iter().chain(&tpr.smoothness).chain(&tpr.weight) {
            prop_assert!((0.0..=1.0).contains(s), "{s}");
        }
    }

    #[test]
    fn confidence_mask_shrinks_as_alpha_grows(n in 2usize..30, seed in any::<u64>(), a in 0.0f64..2.0, gap in 0.0f64..2.0) {
        let z = unit_matrix(n, 5, seed);
        let p = unit_matrix(3, 5, seed ^ 7);
        let unlabeled: Vec<usize> = (0..n).filter(|v| v % 4 != 0).collect();
        let low = pseudo_labels(&z, &p, &unlabeled, 0.05, a).unwrap();
        let high = pseudo_labels(&z, &p, &unlabeled, 0.05, a + gap).unwrap();
        for v in 0..n {
            prop_assert!(!high.mask[v] || low.mask[v], "node {v}");
            if unlabeled.binary_search(&v).is_err() {
                prop_assert!(!low.mask[v]);
            }
        }
    }

    #[test]
    fn retained_novel_clusters_are_dense(n in 2usize..80, seed in any::<u64>()) {
        let z = unit_matrix(n, 4, seed);
        let known = unit_matrix(2, 4, seed ^ 3);
        let tpr = vec![0.5; n];
        let empty = DenseMatrix::zeros(0, 4);
        let cfg = DiscoveryConfig::default();
        let d = local_discover(&z, &tpr, &empty, &[], &[], &known, 0.5, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        for c in &d.clusters {
            if c.kind == ClusterKind::Novel {
                prop_assert!(c.density > cfg.tau_density);
            }
        }
    }

    #[test]
    fn assignment_is_invariant_to_positive_affine_rescaling(
        rows in 1usize..7, cols in 1usize..7, seed in any::<u64>(), scale in 0.1f64..10.0, shift in -3.0f64..3.0,
    ) {
        let m = random_matrix(rows, cols, &mut ChaCha8Rng::seed_from_u64(seed));
        let scaled = m.map(|x| scale * x + shift);
        prop_assert_eq!(max_weight_assignment(&m), max_weight_assignment(&scaled));
    }
}

#[test]
fn assignment_matches_brute_force() {
    for size in 3..=6 {
        for i in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[size as u64, i]));
            let data = (0..size * size).map(|_| rng.random_range(0.0..1.0)).collect();
            let m = DenseMatrix::from_vec(size, size, data).unwrap();
            let pairs = max_weight_assignment(&m);
            assert_eq!(pairs.len(), size);
            assert_eq!(assignment_total(&m, &pairs), brute_force_assignment(&m), "size {size} matrix {i}");
        }
    }
}

#[test]
fn dendrogram_heights_match_naive_linkage() {
    for seed in 0..20 {
        let points = unit_rows(8, 5, &mut ChaCha8Rng::seed_from_u64(seed));
        let fast: Vec<f64> = dendrogram(&points, None).merges.iter().map(|m| m.height).collect();
        let naive = naive_average_linkage(&points);
        assert_eq!(fast.len(), naive.len());
        for (a, b) in fast.iter().zip(&naive) {
            assert!((a - b).abs() <= 1e-12, "seed {seed}: {fast:?} vs {naive:?}");
        }
    }
}

#[test]
fn chosen_cut_matches_exhaustive_search() {
    for seed in 0..50 {
        let pool = random_pool(seed);
        let points: Vec<Vec<f64>> = pool.iter().map(|p| p.centroid.clone()).collect();
        let tree = dendrogram(&points, None);
        let fast = optimal_cut(&pool, &tree, 3, 0.1);
        let oracle = exhaustive_cut(&pool, &tree, 3, 0.1);
        match (fast, oracle) {
            (None, None) => {}
            (Some(f), Some((score, k, labels))) => {
                assert_eq!(f.score, score, "pool {seed}");
                assert_eq!(f.num_clusters, k, "pool {seed}");
                assert!(same_partition(&f.labels, &labels), "pool {seed}");
            }
            (f, o) => panic!("pool {seed}: {f:?} vs {o:?}"),
        }
    }
}

#[test]
fn split_fractions_are_within_one_node() {
    let g = sbm();
    for seed in 0..5 {
        let part = louvain_partition(&g, 10, seed).unwrap();
        assert_eq!(part.clients().iter().map(|c| c.nodes.len()).sum::<usize>(), g.num_nodes());
        let local_edges: usize = part.clients().iter().map(|c| c.edges.len()).sum();
        assert!(local_edges <= g.edges().len());
        let masks = gcd_split(&g, &part, 0.2, seed).unwrap();
        assert_eq!(masks, gcd_split(&g, &part, 0.2, seed).unwrap());
        for client in part.clients() {
            for &k in &masks.known_classes {
                let group: Vec<usize> = client.nodes.iter().copied().filter(|&v| g.labels()[v] == k).collect();
                if group.is_empty() {
                    continue;
                }
                let n = group.len() as f64;
                let count = |r: Role| group.iter().filter(|&&v| masks.roles[v] == r).count() as f64;
                assert!((count(Role::LabeledTrain) - 0.2 * n).abs() <= 1.0, "labeled share off");
                assert!((count(Role::Val) - 0.4 * n).abs() <= 1.0, "validation share off");
                assert!((count(Role::Unlabeled) - 0.4 * n).abs() <= 1.0, "unlabeled share off");
            }
        }
        for (v, &label) in g.labels().iter().enumerate() {
            if !masks.is_known(label) {
                assert_eq!(masks.roles[v], Role::Unlabeled);
            }
        }
    }
}
