//! The federated round loop and its on-disk artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::client::{bootstrap_report, run_client_round, ClientData, ClientReport, LossBreakdown};
use crate::config::ExperimentConfig;
use crate::error::{FggcdError, Result};
use crate::gnn::GcnModel;
use crate::graph::{gcd_split, load_graph, louvain_partition, sparsify_labels, Graph, Partition, Role, SplitMasks};
use crate::metrics::{evaluate, hrscore, predict, MetricsReport};
use crate::numeric::DenseMatrix;
use crate::server::{initialize_memory, server_round, GlobalMemory, ServerSummary};

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Order-sensitive hash of a seed path, e.g. `(seed, round, client)`.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED, |acc, &p| splitmix(acc ^ splitmix(p)))
}

const TAG_PARTITION: u64 = 1;
const TAG_SPLIT: u64 = 2;
const TAG_SPARSIFY: u64 = 3;
const TAG_INIT: u64 = 4;
const TAG_SAMPLE: u64 = 5;
const TAG_CLIENT: u64 = 6;

#[derive(Debug, Clone)]
pub struct ClientLoss {
    pub round: usize,
    pub client: usize,
    pub epoch: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub metrics: MetricsReport,
    pub seconds: f64,
    pub participants: Vec<usize>,
    pub server: ServerSummary,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rounds: Vec<RoundRecord>,
    pub losses: Vec<ClientLoss>,
    pub memory: GlobalMemory,
    pub known_classes: Vec<usize>,
    pub novel_classes: Vec<usize>,
}

impl ExperimentResult {
    pub fn final_metrics(&self) -> &MetricsReport {
        &self.rounds.last().expect("at least one round").metrics
    }
}

/// Prepared federation: partition, split masks and per-client data.
pub struct Federation {
    pub partition: Partition,
    pub masks: SplitMasks,
    pub clients: Vec<ClientData>,
}

impl Federation {
    pub fn build(g: &Graph, cfg: &ExperimentConfig) -> Result<Self> {
        let partition = louvain_partition(g, cfg.clients, derive_seed(&[cfg.seed, TAG_PARTITION]))?;
        let mut masks = gcd_split(g, &partition, cfg.label_rate, derive_seed(&[cfg.seed, TAG_SPLIT]))?;
        if cfg.sparsity_rate > 0.0 {
            masks = sparsify_labels(&masks, &partition, cfg.sparsity_rate, derive_seed(&[cfg.seed, TAG_SPARSIFY]))?;
        }
        let clients = partition
            .clients()
            .iter()
            .enumerate()
            .map(|(id, view)| ClientData::new(id, g, view, &masks))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            partition,
            masks,
            clients,
        })
    }

    /// Old/New/All accuracy of `model` + `memory` over every unlabeled node.
    pub fn evaluate(&self, g: &Graph, model: &GcnModel, memory: &GlobalMemory, round: usize) -> Result<MetricsReport> {
        let prototypes = memory.prototype_matrix();
        let mut predicted = vec![usize::MAX; g.num_nodes()];
        let mut test = Vec::new();
        for c in &self.clients {
            let z = model.embed(&c.adj, &c.propagated)?;
            let local: Vec<usize> = c.unlabeled.clone();
            let preds = predict(&z.select_rows(&local), &prototypes);
            for (&v, p) in local.iter().zip(preds) {
                predicted[c.nodes[v]] = p;
                test.push(c.nodes[v]);
            }
        }
        test.sort_unstable();
        debug_assert!(test.iter().all(|&v| self.masks.roles[v] == Role::Unlabeled));
        let (old_acc, new_acc, all_acc) = evaluate(&predicted, g.labels(), &test, |c| self.masks.is_known(c));
        Ok(MetricsReport {
            round,
            old_acc,
            new_acc,
            all_acc,
            hrscore: hrscore(old_acc.unwrap_or(0.0), new_acc.unwrap_or(0.0)),
            num_prototypes: memory.num_slots(),
            num_novel: memory.novel.len(),
            num_stale: memory.stale_count(),
        })
    }
}

fn sample_clients(cfg: &ExperimentConfig, round: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..cfg.clients).collect();
    let take = cfg.clients_per_round();
    if take < cfg.clients {
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, TAG_SAMPLE, round as u64])));
        ids.truncate(take);
        ids.sort_unstable();
    }
    ids
}

/// Runs the full loop on an in-memory graph. `observe` sees the memory and
/// metrics after every round.
pub fn run_on_graph(
    g: &Graph,
    cfg: &ExperimentConfig,
    mut observe: impl FnMut(&GlobalMemory, &RoundRecord),
) -> Result<ExperimentResult> {
    cfg.validate()?;
    let fed = Federation::build(g, cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| FggcdError::Config(format!("worker pool: {e}")))?;

    let mut model = GcnModel::new(
        g.num_features(),
        cfg.hidden,
        cfg.embed,
        &mut ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, TAG_INIT])),
    );
    let boot: Vec<ClientReport> = fed
        .clients
        .iter()
        .map(|c| bootstrap_report(&model, c))
        .collect::<Result<_>>()?;
    let mut memory = initialize_memory(&boot, &fed.masks.known_classes, cfg.embed, cfg.eps)?;

    let round_cfg = cfg.client_round_config();
    let server_cfg = cfg.server_config();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut losses = Vec::new();
    for t in 1..=cfg.rounds {
        let start = Instant::now();
        let participants = sample_clients(cfg, t);
        let prototypes = memory.prototype_matrix();
        let num_known = memory.known.len();
        let reports: Vec<ClientReport> = pool.install(|| {
            participants
                .par_iter()
                .map(|&id| {
                    let seed = derive_seed(&[cfg.seed, TAG_CLIENT, t as u64, id as u64]);
                    run_client_round(&model, &fed.clients[id], &prototypes, num_known, &round_cfg, seed)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        for r in &reports {
            losses.extend(r.losses.iter().enumerate().map(|(epoch, &loss)| ClientLoss {
                round: t,
                client: r.client,
                epoch,
                loss,
            }));
        }
        let (next, server) = server_round(&mut memory, &reports, &server_cfg, t)?;
        model = next;
        let metrics = fed.evaluate(g, &model, &memory, t)?;
        let record = RoundRecord {
            metrics,
            seconds: start.elapsed().as_secs_f64(),
            participants,
            server,
        };
        log::info!(
            "round {t}: all={:?} old={:?} new={:?} hr={:.2} slots={} pool={} cand={}",
            record.metrics.all_acc,
            record.metrics.old_acc,
            record.metrics.new_acc,
            record.metrics.hrscore,
            record.metrics.num_prototypes,
            server.pool_size,
            server.candidates
        );
        observe(&memory, &record);
        rounds.push(record);
    }
    Ok(ExperimentResult {
        rounds,
        losses,
        memory,
        known_classes: fed.masks.known_classes.clone(),
        novel_classes: fed.masks.novel_classes.clone(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `metrics.csv` contents. Wall time is kept out so the file is reproducible.
pub fn metrics_csv(result: &ExperimentResult) -> String {
    let mut s = String::from("round,old_acc,new_acc,all_acc,hrscore,num_prototypes,num_novel,num_stale\n");
    for r in &result.rounds {
        let m = &r.metrics;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            m.round,
            fmt_opt(m.old_acc),
            fmt_opt(m.new_acc),
            fmt_opt(m.all_acc),
            m.hrscore,
            m.num_prototypes,
            m.num_novel,
            m.num_stale
        ));
    }
    s
}

#[derive(Serialize)]
struct Report<'a> {
    dataset: String,
    rounds: usize,
    clients: usize,
    known_classes: &'a [usize],
    novel_classes: &'a [usize],
    #[serde(rename = "final")]
    final_metrics: &'a MetricsReport,
    total_seconds: f64,
}

/// Writes `metrics.csv`, `timing.csv`, `losses.csv`, `report.json`,
/// `memory.json` and `config.echo` into `dir`.
pub fn write_artifacts(dir: &Path, cfg: &ExperimentConfig, result: &ExperimentResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.csv"), metrics_csv(result))?;
    fs::write(dir.join("config.echo"), cfg.echo())?;

    let mut timing = String::from("round,seconds\n");
    for r in &result.rounds {
        timing.push_str(&format!("{},{:.6}\n", r.metrics.round, r.seconds));
    }
    fs::write(dir.join("timing.csv"), timing)?;

    let mut w = csv::Writer::from_path(dir.join("losses.csv"))?;
    w.write_record(["round", "client", "epoch", "sup", "unsup", "gcl", "total"])?;
    for l in &result.losses {
        w.write_record([
            l.round.to_string(),
            l.client.to_string(),
            l.epoch.to_string(),
            l.loss.sup.to_string(),
            l.loss.unsup.to_string(),
            l.loss.gcl.to_string(),
            l.loss.total.to_string(),
        ])?;
    }
    w.flush()?;

    let report = Report {
        dataset: cfg.dataset.display().to_string(),
        rounds: cfg.rounds,
        clients: cfg.clients,
        known_classes: &result.known_classes,
        novel_classes: &result.novel_classes,
        final_metrics: result.final_metrics(),
        total_seconds: result.rounds.iter().map(|r| r.seconds).sum(),
    };
    let mut f = BufWriter::new(File::create(dir.join("report.json"))?);
    serde_json::to_writer_pretty(&mut f, &report)?;
    f.flush()?;
    result.memory.save_json(dir.join("memory.json"))
}

/// Loads `cfg.dataset`, runs, and writes artifacts to `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let g = load_graph(&cfg.dataset)?;
    let result = run_on_graph(&g, cfg, |_, _| {})?;
    write_artifacts(&cfg.out, cfg, &result)?;
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: String,
    pub runs: usize,
    pub old_mean: f64,
    pub old_std: f64,
    pub new_mean: f64,
    pub new_std: f64,
    pub all_mean: f64,
    pub all_std: f64,
    pub hrscore_mean: f64,
    pub hrscore_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Re-runs the experiment for every value of `param`, `repeats` times each
/// with seeds `seed, seed+1, …`. Each run writes into
/// `out/<param>=<value>/seed<k>/`; the summary goes to `out/sweep.csv`.
pub fn sweep(base: &ExperimentConfig, param: &str, values: &[String], repeats: usize) -> Result<Vec<SweepRow>> {
    if repeats == 0 {
        return Err(FggcdError::Config("repeats must be at least 1".into()));
    }
    base.validate()?;
    let g = load_graph(&base.dataset)?;
    let mut rows = Vec::new();
    for value in values {
        let mut finals = Vec::new();
        for rep in 0..repeats {
            let mut cfg = base.clone();
            cfg.set(param, value)?;
            cfg.seed = base.seed + rep as u64;
            cfg.out = base.out.join(format!("{param}={value}")).join(format!("seed{}", cfg.seed));
            let result = run_on_graph(&g, &cfg, |_, _| {})?;
            write_artifacts(&cfg.out, &cfg, &result)?;
            finals.push(result.final_metrics().clone());
        }
        let pick = |f: fn(&MetricsReport) -> f64| mean_std(&finals.iter().map(f).collect::<Vec<_>>());
        let (old_mean, old_std) = pick(|m| m.old_acc.unwrap_or(0.0));
        let (new_mean, new_std) = pick(|m| m.new_acc.unwrap_or(0.0));
        let (all_mean, all_std) = pick(|m| m.all_acc.unwrap_or(0.0));
        let (hrscore_mean, hrscore_std) = pick(|m| m.hrscore);
        rows.push(SweepRow {
            param: param.to_string(),
            value: value.clone(),
            runs: repeats,
            old_mean,
            old_std,
            new_mean,
            new_std,
            all_mean,
            all_std,
            hrscore_mean,
            hrscore_std,
        });
    }
    fs::create_dir_all(&base.out)?;
    let mut w = csv::Writer::from_path(base.out.join("sweep.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

/// Embeddings of every node under `model`, assembled from the client views.
pub fn global_embeddings(g: &Graph, fed: &Federation, model: &GcnModel) -> Result<DenseMatrix> {
    let mut z = DenseMatrix::zeros(g.num_nodes(), model.embed_dim());
    for c in &fed.clients {
        let local = model.embed(&c.adj, &c.propagated)?;
        for (i, &v) in c.nodes.iter().enumerate() {
            z.row_mut(v).copy_from_slice(local.row(i));
        }
    }
    Ok(z)
}
