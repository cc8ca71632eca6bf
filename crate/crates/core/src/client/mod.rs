//! One client's local round: reliability scoring, the combined loss, local
//! training, and local prototype discovery.

mod discover;
mod loss;
mod tpr;

pub use discover::{
    kmeans, labeled_class_means, local_discover, relaxed_cluster_count, ClusterKind, DiscoveryConfig, KMeans,
    LabeledMean, LocalCluster, LocalDiscovery, KMEANS_MAX_ITER, KMEANS_TOL,
};
pub use loss::{
    dynamic_threshold, loss_gcl, loss_sup, loss_unsup, pseudo_labels, sample_negatives, GclSemantics, PseudoLabels,
    TRUNCATED_POSITIVE,
};
pub use tpr::{compute_confidence, compute_smoothness, compute_tpr, neighbor_lists, TprScores};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{FggcdError, Result};
use crate::gnn::{logits, GcnModel, NormalizedAdjacency};
use crate::graph::{ClientView, Graph, Role, SplitMasks};
use crate::numeric::{Adam, AdamConfig, DenseMatrix, Tape};

/// Everything a client owns, in local node ids.
#[derive(Debug, Clone)]
pub struct ClientData {
    pub id: usize,
    /// Global id of each local node.
    pub nodes: Vec<usize>,
    pub adj: NormalizedAdjacency,
    /// `Â · X`, fixed for the whole run.
    pub propagated: DenseMatrix,
    pub neighbors: Vec<Vec<usize>>,
    pub roles: Vec<Role>,
    /// `(local node, known index)` for labeled training nodes.
    pub labeled: Vec<(usize, usize)>,
    pub unlabeled: Vec<usize>,
}

impl ClientData {
    pub fn new(id: usize, g: &Graph, view: &ClientView, masks: &SplitMasks) -> Result<Self> {
        let adj = NormalizedAdjacency::from_edges(view.nodes.len(), &view.edges)?;
        let propagated = adj.matrix().matmul(&g.features().select_rows(&view.nodes))?;
        let roles: Vec<Role> = view.nodes.iter().map(|&v| masks.roles[v]).collect();
        let mut labeled = Vec::new();
        let mut unlabeled = Vec::new();
        for (i, &v) in view.nodes.iter().enumerate() {
            match roles[i] {
                Role::LabeledTrain => {
                    let label = g.labels()[v];
                    let k = masks
                        .known_classes
                        .binary_search(&label)
                        .map_err(|_| FggcdError::MissingKnownClass(label))?;
                    labeled.push((i, k));
                }
                Role::Unlabeled => unlabeled.push(i),
                Role::Val => {}
            }
        }
        if labeled.is_empty() {
            log::warn!("client {id} has no labeled nodes; its supervised loss is zero");
        }
        Ok(Self {
            id,
            nodes: view.nodes.clone(),
            neighbors: neighbor_lists(view.nodes.len(), &view.edges),
            adj,
            propagated,
            roles,
            labeled,
            unlabeled,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub tau: f64,
    pub tau_sharp: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
    pub negative_cap: usize,
    pub no_gcl: bool,
    pub no_unsup: bool,
    pub no_trg: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            tau_sharp: 0.05,
            alpha: 1.0,
            beta: 1.0,
            eps: crate::numeric::EPS,
            negative_cap: 64,
            no_gcl: false,
            no_unsup: false,
            no_trg: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossBreakdown {
    pub sup: f64,
    pub unsup: f64,
    pub gcl: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.sup.is_finite() && self.unsup.is_finite() && self.gcl.is_finite() && self.total.is_finite()
    }
}

/// Reliability scores of the current embeddings against `prototypes`.
pub fn score_tpr(z: &DenseMatrix, neighbors: &[Vec<usize>], prototypes: &DenseMatrix, cfg: &LossConfig) -> Result<TprScores> {
    let probs = logits(z, prototypes, cfg.tau)?.softmax_rows(1.0)?;
    Ok(TprScores::new(
        compute_confidence(&probs, cfg.eps),
        compute_smoothness(z, neighbors),
    ))
}

/// A recorded total loss together with its parameter leaves.
pub struct LossGraph {
    pub tape: Tape,
    pub w1: crate::numeric::Var,
    pub w2: crate::numeric::Var,
    pub loss: crate::numeric::Var,
    pub breakdown: LossBreakdown,
    pub tpr: TprScores,
    pub pseudo: PseudoLabels,
}

/// Records `L_sup + L_unsup + β·L_gcl` for the current model. Weights, masks
/// and pseudo-labels are computed from the forward values and enter as constants.
pub fn build_loss(
    model: &GcnModel,
    data: &ClientData,
    prototypes: &DenseMatrix,
    cfg: &LossConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LossGraph> {
    let mut tape = Tape::new();
    let (w1, w2, z) = model.forward_on_tape(&mut tape, &data.adj, &data.propagated)?;
    let z_val = tape.value(z).clone();
    let tpr = score_tpr(&z_val, &data.neighbors, prototypes, cfg)?;
    let pseudo = pseudo_labels(&z_val, prototypes, &data.unlabeled, cfg.tau_sharp, cfg.alpha)?;

    let sup = loss_sup(&mut tape, z, prototypes, &data.labeled, cfg.tau)?;
    let mut total = sup;

    let mut unsup_value = 0.0;
    if !cfg.no_unsup {
        let uniform;
        let weights = if cfg.no_trg {
            uniform = vec![1.0; data.num_nodes()];
            &uniform
        } else {
            &tpr.weight
        };
        let unsup = loss_unsup(&mut tape, z, prototypes, &data.unlabeled, &pseudo, weights, cfg.tau)?;
        unsup_value = tape.scalar_value(unsup);
        total = tape.add(total, unsup)?;
    }

    let beta = if cfg.no_gcl { 0.0 } else { cfg.beta };
    let mut gcl_value = 0.0;
    if beta != 0.0 {
        let mut semantics = GclSemantics {
            labels: pseudo.labels.clone(),
            confident: pseudo.mask.clone(),
        };
        for &(v, k) in &data.labeled {
            semantics.labels[v] = k;
            semantics.confident[v] = true;
        }
        let negatives = sample_negatives(&data.neighbors, cfg.negative_cap, rng);
        let gcl = loss_gcl(&mut tape, z, &data.neighbors, &negatives, &semantics, cfg.tau)?;
        gcl_value = tape.scalar_value(gcl);
        let scaled = tape.scale(gcl, beta);
        total = tape.add(total, scaled)?;
    }

    let breakdown = LossBreakdown {
        sup: tape.scalar_value(sup),
        unsup: unsup_value,
        gcl: gcl_value,
        total: tape.scalar_value(total),
    };
    Ok(LossGraph {
        tape,
        w1,
        w2,
        loss: total,
        breakdown,
        tpr,
        pseudo,
    })
}

/// `epochs` full-batch Adam steps from `global`, with a fresh optimiser state.
pub fn local_update(
    global: &GcnModel,
    data: &ClientData,
    prototypes: &DenseMatrix,
    cfg: &LossConfig,
    adam: AdamConfig,
    epochs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(GcnModel, Vec<LossBreakdown>)> {
    let mut model = global.clone();
    let mut optimizer = Adam::new(adam);
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let graph = build_loss(&model, data, prototypes, cfg, rng)?;
        if !graph.breakdown.is_finite() {
            return Err(FggcdError::Divergence {
                client: data.id,
                epoch,
            });
        }
        let grads = graph.tape.backward(graph.loss)?;
        model.zero_grad();
        grads.accumulate_into(graph.w1, &mut model.w1)?;
        grads.accumulate_into(graph.w2, &mut model.w2)?;
        optimizer.step(&mut model.params_mut())?;
        history.push(graph.breakdown);
    }
    Ok((model, history))
}

#[derive(Debug, Clone)]
pub struct ClientReport {
    pub client: usize,
    pub w1: DenseMatrix,
    pub w2: DenseMatrix,
    pub discovery: LocalDiscovery,
    pub num_nodes: usize,
    pub num_labeled: usize,
    pub num_unlabeled: usize,
    pub losses: Vec<LossBreakdown>,
}

#[derive(Debug, Clone, Copy)]
pub struct ClientRoundConfig {
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub discovery: DiscoveryConfig,
}

/// Local training followed by discovery on the trained embeddings. Known
/// prototypes are the first `num_known` rows of `prototypes`.
pub fn run_client_round(
    global: &GcnModel,
    data: &ClientData,
    prototypes: &DenseMatrix,
    num_known: usize,
    cfg: &ClientRoundConfig,
    seed: u64,
) -> Result<ClientReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (model, losses) = local_update(global, data, prototypes, &cfg.loss, cfg.adam, cfg.epochs, &mut rng)?;
    let z = model.embed(&data.adj, &data.propagated)?;
    let tpr = score_tpr(&z, &data.neighbors, prototypes, &cfg.loss)?;
    let known = prototypes.select_rows(&(0..num_known).collect::<Vec<_>>());
    let discovery = discover_for(data, &z, &tpr.weight, &known, &cfg.discovery, &mut rng);
    Ok(ClientReport {
        client: data.id,
        w1: model.w1.value,
        w2: model.w2.value,
        discovery,
        num_nodes: data.num_nodes(),
        num_labeled: data.labeled.len(),
        num_unlabeled: data.unlabeled.len(),
        losses,
    })
}

fn discover_for(
    data: &ClientData,
    z: &DenseMatrix,
    w: &[f64],
    known: &DenseMatrix,
    cfg: &DiscoveryConfig,
    rng: &mut ChaCha8Rng,
) -> LocalDiscovery {
    let lab_nodes: Vec<usize> = data.labeled.iter().map(|&(v, _)| v).collect();
    let targets: Vec<usize> = data.labeled.iter().map(|&(_, k)| k).collect();
    local_discover(
        &z.select_rows(&data.unlabeled),
        &data.unlabeled.iter().map(|&v| w[v]).collect::<Vec<_>>(),
        &z.select_rows(&lab_nodes),
        &targets,
        &lab_nodes.iter().map(|&v| w[v]).collect::<Vec<_>>(),
        known,
        tpr::mean(w),
        cfg,
        rng,
    )
}

/// Round-0 upload: labeled class means under the initial model. With no
/// prototypes yet, confidence is taken as 1 so reliability equals smoothness.
pub fn bootstrap_report(global: &GcnModel, data: &ClientData) -> Result<ClientReport> {
    let z = global.embed(&data.adj, &data.propagated)?;
    let w = compute_smoothness(&z, &data.neighbors);
    let lab_nodes: Vec<usize> = data.labeled.iter().map(|&(v, _)| v).collect();
    let targets: Vec<usize> = data.labeled.iter().map(|&(_, k)| k).collect();
    let discovery = LocalDiscovery {
        clusters: Vec::new(),
        client_avg_tpr: tpr::mean(&w),
        labeled_means: labeled_class_means(
            &z.select_rows(&lab_nodes),
            &targets,
            &lab_nodes.iter().map(|&v| w[v]).collect::<Vec<_>>(),
        ),
    };
    Ok(ClientReport {
        client: data.id,
        w1: global.w1.value.clone(),
        w2: global.w2.value.clone(),
        discovery,
        num_nodes: data.num_nodes(),
        num_labeled: data.labeled.len(),
        num_unlabeled: data.unlabeled.len(),
        losses: Vec::new(),
    })
}
