//! Planted-partition (stochastic block model) graphs with Gaussian class features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Graph;
use crate::error::{FggcdError, Result};
use crate::numeric::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub num_blocks: usize,
    pub block_size: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Norm of each class mean.
    pub separation: f64,
    /// Per-coordinate standard deviation around the class mean.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            num_blocks: 6,
            block_size: 50,
            p_in: 0.2,
            p_out: 0.004,
            feature_dim: 32,
            separation: 3.0,
            noise: 1.0,
            seed: 2024,
        }
    }
}

/// Node `i` belongs to block `i / block_size`, which is also its label.
pub fn planted_partition(cfg: &PlantedConfig) -> Result<Graph> {
    if cfg.num_blocks == 0 || cfg.block_size == 0 || cfg.feature_dim == 0 {
        return Err(FggcdError::InvalidArgument("empty planted partition".into()));
    }
    for p in [cfg.p_in, cfg.p_out] {
        if !(0.0..=1.0).contains(&p) {
            return Err(FggcdError::InvalidArgument(format!("edge probability {p} outside [0, 1]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.num_blocks * cfg.block_size;
    let d = cfg.feature_dim;

    let means: Vec<Vec<f64>> = (0..cfg.num_blocks)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let len = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x * cfg.separation / len).collect()
        })
        .collect();

    let labels: Vec<usize> = (0..n).map(|i| i / cfg.block_size).collect();
    let mut data = Vec::with_capacity(n * d);
    for &label in &labels {
        for mean in &means[label] {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(mean + cfg.noise * z);
        }
    }
    let features = DenseMatrix::from_vec(n, d, data)?;

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { cfg.p_in } else { cfg.p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let mut g = Graph::new(
        format!("planted-{}x{}", cfg.num_blocks, cfg.block_size),
        features,
        edges,
        labels,
        cfg.num_blocks,
    )?;
    g.class_names = (0..cfg.num_blocks).map(|b| format!("block_{b}")).collect();
    Ok(g)
}
