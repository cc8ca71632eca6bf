//! Federated graph generalized category discovery simulator.
//!
//! Clients train a two-layer GCN on Louvain-partitioned subgraphs with
//! topology-reliability-weighted prototype losses; a simulated server averages
//! weights, aggregates known prototypes, discovers novel ones by a penalised
//! dendrogram cut and routes them into a persistent prototype memory.

pub mod assignment;
pub mod client;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod numeric;
pub mod server;

pub use error::{FggcdError, Result};
