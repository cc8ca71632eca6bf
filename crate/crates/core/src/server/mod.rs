//! Server round: FedAvg, known-prototype aggregation, novel discovery by a
//! penalised dendrogram cut, and matching into the prototype memory.

mod aggregate;
mod hierarchy;
mod memory;
mod routing;

pub use aggregate::{aggregate_prototypes, aggregate_weights, initialize_memory, weighted_average, weighted_prototype};
pub use hierarchy::{
    cosine_distances, cut_penalty, dendrogram, optimal_cut, silhouette, CutResult, Dendrogram, Merge, PoolEntry,
    CANNOT_LINK_HEIGHT,
};
pub use memory::{GlobalMemory, KnownSlot, NovelSlot, STALE_AFTER};
pub use routing::{match_prototypes, route_memory, similarity_matrix, Match, MatchResult, RoutingSummary};

use crate::client::{ClientReport, ClusterKind};
use crate::error::Result;
use crate::gnn::GcnModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerConfig {
    pub eps: f64,
    pub tau_base: f64,
    pub lambda_hc: f64,
    pub rho: f64,
    pub cannot_link: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            eps: crate::numeric::EPS,
            tau_base: 0.3,
            lambda_hc: 0.1,
            rho: 0.9,
            cannot_link: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ServerSummary {
    pub pool_size: usize,
    pub candidates: usize,
    pub routing: RoutingSummary,
}

/// Novel-tagged clusters from every report, in report order.
pub fn discovery_pool(reports: &[ClientReport]) -> Vec<PoolEntry> {
    reports
        .iter()
        .flat_map(|r| {
            r.discovery
                .clusters
                .iter()
                .filter(|c| c.kind == ClusterKind::Novel)
                .map(move |c| PoolEntry {
                    centroid: c.centroid.clone(),
                    density: c.density,
                    avg_tpr: c.avg_tpr,
                    client: r.client,
                })
        })
        .collect()
}

/// Runs one aggregation round and advances `memory.round` to `round`.
pub fn server_round(
    memory: &mut GlobalMemory,
    reports: &[ClientReport],
    cfg: &ServerConfig,
    round: usize,
) -> Result<(GcnModel, ServerSummary)> {
    let model = aggregate_weights(reports)?;
    aggregate_prototypes(memory, reports, cfg.eps);

    let pool = discovery_pool(reports);
    let mut summary = ServerSummary {
        pool_size: pool.len(),
        ..Default::default()
    };
    if pool.len() >= 2 {
        let points: Vec<Vec<f64>> = pool.iter().map(|p| p.centroid.clone()).collect();
        let origins: Vec<usize> = pool.iter().map(|p| p.client).collect();
        let tree = dendrogram(&points, cfg.cannot_link.then_some(origins.as_slice()));
        if let Some(cut) = optimal_cut(&pool, &tree, memory.known.len(), cfg.lambda_hc) {
            summary.candidates = cut.centers.len();
            let matched = match_prototypes(&cut.centers, &memory.novel_prototypes(), cfg.tau_base);
            summary.routing = route_memory(memory, &cut.centers, &matched, cfg.rho, round);
        }
    }
    memory.round = round;
    Ok((model, summary))
}
