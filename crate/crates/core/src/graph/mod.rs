//! Graph ingestion, client partitioning and the known/novel split protocol.

mod io;
mod louvain;
mod split;
pub mod synthetic;

pub use io::{load_graph, save_graph, DatasetMeta, FEATURES_MAGIC};
pub use louvain::{louvain_communities, louvain_partition, modularity};
pub use split::{gcd_split, sparsify_labels, Role, SplitMasks, VAL_FRACTION};

use std::collections::BTreeSet;

use crate::error::{FggcdError, Result};
use crate::numeric::DenseMatrix;

/// An undirected, attributed, labelled graph.
#[derive(Debug, Clone)]
pub struct Graph {
    pub name: String,
    features: DenseMatrix,
    edges: Vec<(usize, usize)>,
    labels: Vec<usize>,
    num_classes: usize,
    pub class_names: Vec<String>,
}

impl Graph {
    /// Validates and canonicalises the edge list: pairs are stored as `(min, max)`,
    /// sorted and deduplicated. Self-loops are dropped.
    pub fn new(
        name: impl Into<String>,
        features: DenseMatrix,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(FggcdError::InvalidArgument(format!(
                "{} labels for {n} nodes",
                labels.len()
            )));
        }
        if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(FggcdError::InvalidArgument(format!(
                "node {node} has label {label}, but there are only {num_classes} classes"
            )));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(FggcdError::InvalidArgument(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
        Ok(Self {
            name: name.into(),
            features,
            edges: set.into_iter().collect(),
            labels,
            num_classes,
            class_names: (0..num_classes).map(|c| format!("class_{c}")).collect(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    /// Undirected edges as `(u, v)` with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }
}

/// One client's view: the nodes it owns and the edges among them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientView {
    /// Global node ids, ascending. Local id `i` is `nodes[i]`.
    pub nodes: Vec<usize>,
    /// Intra-client edges in local ids, `(u, v)` with `u < v`.
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    clients: Vec<ClientView>,
}

impl Partition {
    /// Builds client views from a node→client map. Cross-client edges are dropped.
    pub fn from_assignment(g: &Graph, assignment: Vec<usize>, num_clients: usize) -> Result<Self> {
        if assignment.len() != g.num_nodes() {
            return Err(FggcdError::InvalidArgument(format!(
                "assignment covers {} of {} nodes",
                assignment.len(),
                g.num_nodes()
            )));
        }
        if let Some(&c) = assignment.iter().find(|&&c| c >= num_clients) {
            return Err(FggcdError::InvalidArgument(format!(
                "client id {c} out of range for {num_clients} clients"
            )));
        }
        let mut local = vec![0usize; g.num_nodes()];
        let mut clients: Vec<ClientView> = (0..num_clients)
            .map(|_| ClientView {
                nodes: Vec::new(),
                edges: Vec::new(),
            })
            .collect();
        for (node, &c) in assignment.iter().enumerate() {
            local[node] = clients[c].nodes.len();
            clients[c].nodes.push(node);
        }
        for &(u, v) in g.edges() {
            if assignment[u] == assignment[v] {
                let (a, b) = (local[u], local[v]);
                clients[assignment[u]].edges.push((a.min(b), a.max(b)));
            }
        }
        Ok(Self { assignment, clients })
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn clients(&self) -> &[ClientView] {
        &self.clients
    }

    pub fn client(&self, id: usize) -> &ClientView {
        &self.clients[id]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(edges: &[(usize, usize)], n: usize) -> Graph {
        Graph::new("t", DenseMatrix::zeros(n, 1), edges.iter().copied(), vec![0; n], 1).unwrap()
    }

    #[test]
    fn edges_are_deduplicated_and_symmetrised() {
        let g = tiny(&[(0, 1), (1, 0), (1, 1)], 2);
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn rejects_bad_endpoint_and_label() {
        let bad_edge = Graph::new("t", DenseMatrix::zeros(2, 1), [(0, 2)], vec![0, 0], 1);
        assert!(bad_edge.is_err());
        let bad_label = Graph::new("t", DenseMatrix::zeros(2, 1), [(0, 1)], vec![0, 1], 1);
        assert!(bad_label.is_err());
    }

    #[test]
    fn partition_drops_cross_client_edges() {
        let g = tiny(&[(0, 1), (1, 2), (2, 3)], 4);
        let p = Partition::from_assignment(&g, vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(p.client(0).edges, vec![(0, 1)]);
        assert_eq!(p.client(1).nodes, vec![2, 3]);
        assert_eq!(p.client(1).edges, vec![(0, 1)]);
        let total: usize = p.clients().iter().map(|c| c.nodes.len()).sum();
        assert_eq!(total, 4);
    }
}
