use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fggcd_core::config::ExperimentConfig;
use fggcd_core::experiment::{run_experiment, sweep};
use fggcd_core::graph::synthetic::{planted_partition, PlantedConfig};
use fggcd_core::graph::{load_graph, save_graph};

#[derive(Parser)]
#[command(name = "fggcd", version, about = "Federated graph generalized category discovery simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run(RunArgs),
    /// Check a dataset directory and print its statistics.
    ValidateDataset { dir: PathBuf },
    /// Re-run an experiment over a list of values for one parameter.
    Sweep(SweepArgs),
    /// Write a planted-partition graph in dataset format.
    Synth(SynthArgs),
}

#[derive(Args, Default)]
struct Overrides {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda_hc: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    tau_sharp: Option<f64>,
    #[arg(long)]
    tau_base: Option<f64>,
    #[arg(long)]
    tau_density: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    embed: Option<usize>,
    #[arg(long)]
    label_rate: Option<f64>,
    #[arg(long)]
    sparsity_rate: Option<f64>,
    #[arg(long)]
    client_fraction: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    no_gcl: bool,
    #[arg(long)]
    no_unsup: bool,
    #[arg(long)]
    no_trg: bool,
    #[arg(long)]
    cannot_link: bool,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        let mut pairs: Vec<(&str, String)> = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k, v));
            }
        };
        put("dataset", self.dataset.as_ref().map(|p| p.display().to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("rounds", self.rounds.map(|v| v.to_string()));
        put("clients", self.clients.map(|v| v.to_string()));
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("beta", self.beta.map(|v| v.to_string()));
        put("lambda_hc", self.lambda_hc.map(|v| v.to_string()));
        put("rho", self.rho.map(|v| v.to_string()));
        put("alpha", self.alpha.map(|v| v.to_string()));
        put("tau", self.tau.map(|v| v.to_string()));
        put("tau_sharp", self.tau_sharp.map(|v| v.to_string()));
        put("tau_base", self.tau_base.map(|v| v.to_string()));
        put("tau_density", self.tau_density.map(|v| v.to_string()));
        put("k_max", self.k_max.map(|v| v.to_string()));
        put("lr", self.lr.map(|v| v.to_string()));
        put("weight_decay", self.weight_decay.map(|v| v.to_string()));
        put("hidden", self.hidden.map(|v| v.to_string()));
        put("embed", self.embed.map(|v| v.to_string()));
        put("label_rate", self.label_rate.map(|v| v.to_string()));
        put("sparsity_rate", self.sparsity_rate.map(|v| v.to_string()));
        put("client_fraction", self.client_fraction.map(|v| v.to_string()));
        put("workers", self.workers.map(|v| v.to_string()));
        put("no_gcl", self.no_gcl.then(|| "true".into()));
        put("no_unsup", self.no_unsup.then(|| "true".into()));
        put("no_trg", self.no_trg.then(|| "true".into()));
        put("cannot_link", self.cannot_link.then(|| "true".into()));
        for (k, v) in pairs {
            cfg.set(k, &v)?;
        }
        if cfg.dataset.as_os_str().is_empty() {
            bail!("no dataset given (use --dataset or a config file)");
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Configuration key to vary, e.g. beta or lambda_hc
    #[arg(long)]
    param: String,
    /// Comma-separated values
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 6)]
    blocks: usize,
    #[arg(long, default_value_t = 50)]
    block_size: usize,
    #[arg(long, default_value_t = 0.2)]
    p_in: f64,
    #[arg(long, default_value_t = 0.004)]
    p_out: f64,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "n/a".into())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.overrides.resolve()?;
            let result = run_experiment(&cfg)?;
            let m = result.final_metrics();
            println!(
                "round {}: old {} new {} all {} hrscore {:.2} prototypes {}",
                m.round,
                fmt_pct(m.old_acc),
                fmt_pct(m.new_acc),
                fmt_pct(m.all_acc),
                m.hrscore,
                m.num_prototypes
            );
            println!("artifacts in {}", cfg.out.display());
        }
        Command::ValidateDataset { dir } => {
            let g = load_graph(&dir).with_context(|| format!("validating {}", dir.display()))?;
            println!(
                "{}: {} nodes, {} edges, {} features, {} classes",
                g.name,
                g.num_nodes(),
                g.edges().len(),
                g.num_features(),
                g.num_classes()
            );
        }
        Command::Sweep(args) => {
            let cfg = args.overrides.resolve()?;
            if cfg.get(&args.param).is_none() {
                bail!("unknown parameter {:?}", args.param);
            }
            let rows = sweep(&cfg, &args.param, &args.values, args.repeats)?;
            for r in rows {
                println!(
                    "{}={}: all {:.2}±{:.2} old {:.2}±{:.2} new {:.2}±{:.2} hrscore {:.2}±{:.2} ({} runs)",
                    r.param,
                    r.value,
                    r.all_mean,
                    r.all_std,
                    r.old_mean,
                    r.old_std,
                    r.new_mean,
                    r.new_std,
                    r.hrscore_mean,
                    r.hrscore_std,
                    r.runs
                );
            }
        }
        Command::Synth(a) => {
            let g = planted_partition(&PlantedConfig {
                num_blocks: a.blocks,
                block_size: a.block_size,
                p_in: a.p_in,
                p_out: a.p_out,
                feature_dim: a.dim,
                separation: a.separation,
                noise: a.noise,
                seed: a.seed,
            })?;
            save_graph(&g, &a.out)?;
            println!("wrote {} nodes, {} edges to {}", g.num_nodes(), g.edges().len(), a.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
