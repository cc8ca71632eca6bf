//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::client::{ClientRoundConfig, DiscoveryConfig, LossConfig};
use crate::error::{FggcdError, Result};
use crate::numeric::AdamConfig;
use crate::server::ServerConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub clients: usize,
    pub rounds: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub embed: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub tau: f64,
    pub tau_sharp: f64,
    pub tau_base: f64,
    pub tau_density: usize,
    pub k_max: usize,
    pub beta: f64,
    pub alpha: f64,
    pub lambda_hc: f64,
    pub rho: f64,
    pub eps: f64,
    pub negatives: usize,
    pub client_fraction: f64,
    pub label_rate: f64,
    pub sparsity_rate: f64,
    pub no_gcl: bool,
    pub no_unsup: bool,
    pub no_trg: bool,
    pub cannot_link: bool,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            out: PathBuf::from("fggcd-out"),
            seed: 0,
            clients: 10,
            rounds: 50,
            epochs: 5,
            hidden: 64,
            embed: 32,
            lr: 1e-3,
            weight_decay: 5e-4,
            tau: 0.1,
            tau_sharp: 0.05,
            tau_base: 0.3,
            tau_density: 5,
            k_max: 10,
            beta: 1.0,
            alpha: 1.0,
            lambda_hc: 0.1,
            rho: 0.9,
            eps: 1e-8,
            negatives: 64,
            client_fraction: 1.0,
            label_rate: 0.2,
            sparsity_rate: 0.0,
            no_gcl: false,
            no_unsup: false,
            no_trg: false,
            cannot_link: false,
            workers: 1,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| FggcdError::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(FggcdError::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

impl ExperimentConfig {
    /// Every recognised key, in echo order.
    pub const KEYS: &'static [&'static str] = &[
        "dataset",
        "out",
        "seed",
        "clients",
        "rounds",
        "epochs",
        "hidden",
        "embed",
        "lr",
        "weight_decay",
        "tau",
        "tau_sharp",
        "tau_base",
        "tau_density",
        "k_max",
        "beta",
        "alpha",
        "lambda_hc",
        "rho",
        "eps",
        "negatives",
        "client_fraction",
        "label_rate",
        "sparsity_rate",
        "no_gcl",
        "no_unsup",
        "no_trg",
        "cannot_link",
        "workers",
    ];

    /// Sets one field by name. Hyphens in `key` are read as underscores.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "dataset" => self.dataset = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = parse(k, value)?,
            "clients" => self.clients = parse(k, value)?,
            "rounds" => self.rounds = parse(k, value)?,
            "epochs" => self.epochs = parse(k, value)?,
            "hidden" => self.hidden = parse(k, value)?,
            "embed" => self.embed = parse(k, value)?,
            "lr" => self.lr = parse(k, value)?,
            "weight_decay" => self.weight_decay = parse(k, value)?,
            "tau" => self.tau = parse(k, value)?,
            "tau_sharp" => self.tau_sharp = parse(k, value)?,
            "tau_base" => self.tau_base = parse(k, value)?,
            "tau_density" => self.tau_density = parse(k, value)?,
            "k_max" => self.k_max = parse(k, value)?,
            "beta" => self.beta = parse(k, value)?,
            "alpha" => self.alpha = parse(k, value)?,
            "lambda_hc" => self.lambda_hc = parse(k, value)?,
            "rho" => self.rho = parse(k, value)?,
            "eps" => self.eps = parse(k, value)?,
            "negatives" => self.negatives = parse(k, value)?,
            "client_fraction" => self.client_fraction = parse(k, value)?,
            "label_rate" => self.label_rate = parse(k, value)?,
            "sparsity_rate" => self.sparsity_rate = parse(k, value)?,
            "no_gcl" => self.no_gcl = parse_bool(k, value)?,
            "no_unsup" => self.no_unsup = parse_bool(k, value)?,
            "no_trg" => self.no_trg = parse_bool(k, value)?,
            "cannot_link" => self.cannot_link = parse_bool(k, value)?,
            "workers" => self.workers = parse(k, value)?,
            _ => return Err(FggcdError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let v = match key.replace('-', "_").as_str() {
            "dataset" => self.dataset.display().to_string(),
            "out" => self.out.display().to_string(),
            "seed" => self.seed.to_string(),
            "clients" => self.clients.to_string(),
            "rounds" => self.rounds.to_string(),
            "epochs" => self.epochs.to_string(),
            "hidden" => self.hidden.to_string(),
            "embed" => self.embed.to_string(),
            "lr" => self.lr.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "tau" => self.tau.to_string(),
            "tau_sharp" => self.tau_sharp.to_string(),
            "tau_base" => self.tau_base.to_string(),
            "tau_density" => self.tau_density.to_string(),
            "k_max" => self.k_max.to_string(),
            "beta" => self.beta.to_string(),
            "alpha" => self.alpha.to_string(),
            "lambda_hc" => self.lambda_hc.to_string(),
            "rho" => self.rho.to_string(),
            "eps" => self.eps.to_string(),
            "negatives" => self.negatives.to_string(),
            "client_fraction" => self.client_fraction.to_string(),
            "label_rate" => self.label_rate.to_string(),
            "sparsity_rate" => self.sparsity_rate.to_string(),
            "no_gcl" => self.no_gcl.to_string(),
            "no_unsup" => self.no_unsup.to_string(),
            "no_trg" => self.no_trg.to_string(),
            "cannot_link" => self.cannot_link.to_string(),
            "workers" => self.workers.to_string(),
            _ => return None,
        };
        Some(v)
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| FggcdError::Config(format!("line {}: expected key = value", no + 1)))?;
            cfg.set(key, value)
                .map_err(|e| FggcdError::Config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    /// Canonical `key = value` dump; parsing it back yields the same config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for key in Self::KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key).expect("known key"));
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FggcdError::Config(msg));
        for (name, v) in [("clients", self.clients), ("rounds", self.rounds), ("epochs", self.epochs)] {
            if v < 1 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.hidden == 0 || self.embed == 0 || self.workers == 0 {
            return bad("hidden, embed and workers must be positive".into());
        }
        for (name, v) in [("tau", self.tau), ("tau_sharp", self.tau_sharp), ("eps", self.eps), ("lr", self.lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("rho", self.rho),
            ("label_rate", self.label_rate),
            ("sparsity_rate", self.sparsity_rate),
            ("client_fraction", self.client_fraction),
            ("tau_base", self.tau_base),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.label_rate == 0.0 || self.client_fraction == 0.0 {
            return bad("label_rate and client_fraction must be positive".into());
        }
        if self.sparsity_rate >= 1.0 {
            return bad("sparsity_rate must be below 1".into());
        }
        for (name, v) in [
            ("beta", self.beta),
            ("alpha", self.alpha),
            ("lambda_hc", self.lambda_hc),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.k_max < 2 {
            return bad("k_max must be at least 2".into());
        }
        Ok(())
    }

    /// Number of clients sampled each round: `⌈client_fraction · clients⌉`.
    pub fn clients_per_round(&self) -> usize {
        ((self.client_fraction * self.clients as f64).ceil() as usize).clamp(1, self.clients)
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            tau: self.tau,
            tau_sharp: self.tau_sharp,
            alpha: self.alpha,
            beta: self.beta,
            eps: self.eps,
            negative_cap: self.negatives,
            no_gcl: self.no_gcl,
            no_unsup: self.no_unsup,
            no_trg: self.no_trg,
        }
    }

    pub fn client_round_config(&self) -> ClientRoundConfig {
        ClientRoundConfig {
            loss: self.loss_config(),
            adam: AdamConfig {
                lr: self.lr,
                weight_decay: self.weight_decay,
                ..AdamConfig::default()
            },
            epochs: self.epochs,
            discovery: DiscoveryConfig {
                tau_base: self.tau_base,
                tau_density: self.tau_density,
                k_max: self.k_max,
            },
        }
    }

    pub fn server_config(&self) -> ServerConfig {
        ServerConfig {
            eps: self.eps,
            tau_base: self.tau_base,
            lambda_hc: self.lambda_hc,
            rho: self.rho,
            cannot_link: self.cannot_link,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_with_comments_and_hyphens() {
        let cfg = ExperimentConfig::parse_str(
            "# run\ndataset = data/x\nrounds = 3  # short\nlambda-hc=0.25\nno_gcl = true\n\n",
        )
        .unwrap();
        assert_eq!(cfg.dataset, PathBuf::from("data/x"));
        assert_eq!(cfg.rounds, 3);
        assert_eq!(cfg.lambda_hc, 0.25);
        assert!(cfg.no_gcl);
        assert_eq!(cfg.clients, 10);
    }

    #[test]
    fn errors_name_the_line() {
        let err = ExperimentConfig::parse_str("rounds = 2\nbogus = 1\n").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("bogus"), "{err}");
        assert!(ExperimentConfig::parse_str("rounds 2").is_err());
        assert!(ExperimentConfig::parse_str("rounds = many").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("rho", "0.75").unwrap();
        cfg.set("no-trg", "yes").unwrap();
        cfg.dataset = "some/dir".into();
        assert_eq!(ExperimentConfig::parse_str(&cfg.echo()).unwrap(), cfg);
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        for (k, v) in [
            ("rounds", "0"),
            ("tau", "0"),
            ("rho", "1.5"),
            ("label_rate", "0"),
            ("sparsity_rate", "1"),
            ("client_fraction", "-0.1"),
        ] {
            let mut cfg = ExperimentConfig::default();
            cfg.set(k, v).unwrap();
            assert!(cfg.validate().is_err(), "{k}={v}");
        }
    }

    #[test]
    fn participation_count() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.clients_per_round(), 10);
        cfg.client_fraction = 0.25;
        assert_eq!(cfg.clients_per_round(), 3);
    }
}
