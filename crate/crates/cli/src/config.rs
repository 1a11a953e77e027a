//! Experiment configuration: defaults, then a JSON file, then CLI flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use arglt::attacks::AttackConfig;
use arglt::graph::SbmParams;
use arglt::sparsifier::{ArgsConfig, LoopGuard, RetrainPolicy};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    Pgd,
    Random,
    Dissimilar,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Pgd => "pgd",
            AttackKind::Random => "random",
            AttackKind::Dissimilar => "dissimilar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GuardArg {
    Both,
    Either,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RetrainArg {
    Every,
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    /// `k,n,p_in,p_out,F,sigma` with `n` nodes per block.
    pub sbm: Option<String>,
    /// Train/val/test fractions used when the dataset has no split.json.
    pub split: [f64; 3],
    pub attack: AttackKind,
    pub attack_file: Option<PathBuf>,
    pub attack_config: AttackConfig,
    pub args: ArgsConfig,
    pub seeds: Vec<u64>,
    pub histogram_bins: usize,
    /// Ablation checkpoint rounds.
    pub checkpoints: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            sbm: None,
            split: [0.1, 0.1, 0.8],
            attack: AttackKind::Pgd,
            attack_file: None,
            attack_config: AttackConfig::default(),
            args: ArgsConfig::default(),
            seeds: vec![0],
            histogram_bins: 20,
            checkpoints: vec![5, 18],
        }
    }
}

pub fn parse_sbm(spec: &str, seed: u64) -> Result<SbmParams> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 6 {
        bail!("--sbm expects k,n,p_in,p_out,F,sigma, got {spec:?}");
    }
    let int = |i: usize| parts[i].parse::<usize>().with_context(|| format!("bad integer {:?} in --sbm", parts[i]));
    let float = |i: usize| parts[i].parse::<f64>().with_context(|| format!("bad number {:?} in --sbm", parts[i]));
    Ok(SbmParams {
        blocks: int(0)?,
        nodes_per_block: int(1)?,
        p_in: float(2)?,
        p_out: float(3)?,
        feature_dim: int(4)?,
        feature_noise: float(5)?,
        seed,
    })
}

/// Flags shared by all experiment subcommands. Unset flags leave the
/// config-file or default value in place.
#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// JSON config file (partial; missing keys keep their defaults)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory (edges.txt, features.csv, labels.txt, optional split.json)
    #[arg(long, conflicts_with = "sbm")]
    pub dataset: Option<PathBuf>,
    /// Synthetic graph: blocks, nodes per block, p_in, p_out, feature dim, noise sigma
    #[arg(long, value_name = "k,n,p_in,p_out,F,sigma")]
    pub sbm: Option<String>,
    #[arg(long, value_enum)]
    pub attack: Option<AttackKind>,
    /// Use a previously generated attack.json instead of attacking
    #[arg(long)]
    pub attack_file: Option<PathBuf>,
    /// Perturbation rate
    #[arg(long)]
    pub ptb: Option<f64>,
    #[arg(long)]
    pub pg: Option<f64>,
    #[arg(long)]
    pub ptheta: Option<f64>,
    #[arg(long)]
    pub sg: Option<f64>,
    #[arg(long)]
    pub stheta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Pseudo-label confidence threshold
    #[arg(long)]
    pub tau: Option<f64>,
    /// Epochs per round (mask training and ticket retraining)
    #[arg(long)]
    pub epochs: Option<usize>,
    /// GCN hidden width
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, value_enum)]
    pub guard: Option<GuardArg>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    #[arg(long, value_enum)]
    pub retrain: Option<RetrainArg>,
    /// Ablation checkpoint rounds
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub seed: Option<Vec<u64>>,
    #[arg(long)]
    pub out: PathBuf,
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn load_config_file(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let over: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let mut base = serde_json::to_value(ExperimentConfig::default())?;
    merge(&mut base, over);
    serde_json::from_value(base).with_context(|| format!("invalid config {}", path.display()))
}

impl ExperimentArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => load_config_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(d) = &self.dataset {
            c.dataset = Some(d.clone());
            c.sbm = None;
        }
        if let Some(s) = &self.sbm {
            c.sbm = Some(s.clone());
            c.dataset = None;
        }
        if let Some(a) = self.attack {
            c.attack = a;
        }
        if let Some(f) = &self.attack_file {
            c.attack_file = Some(f.clone());
        }
        let a = &mut c.args;
        let w = &mut a.weights;
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.attack_config.ptb_rate, self.ptb);
        set(&mut a.p_g, self.pg);
        set(&mut a.p_theta, self.ptheta);
        set(&mut a.s_g, self.sg);
        set(&mut a.s_theta, self.stheta);
        set(&mut w.alpha, self.alpha);
        set(&mut w.beta, self.beta);
        set(&mut w.gamma, self.gamma);
        set(&mut w.eta, self.eta);
        set(&mut w.zeta, self.zeta);
        set(&mut w.lambda1, self.lambda1);
        set(&mut w.lambda2, self.lambda2);
        set(&mut a.tau, self.tau);
        if let Some(e) = self.epochs {
            a.epochs = e;
            a.retrain_epochs = e;
        }
        if let Some(h) = self.hidden {
            a.hidden = h;
        }
        if let Some(p) = self.patience {
            a.patience = p;
            a.mlp.patience = p;
        }
        if let Some(g) = self.guard {
            a.guard = match g {
                GuardArg::Both => LoopGuard::Both,
                GuardArg::Either => LoopGuard::Either,
            };
        }
        if self.max_rounds.is_some() {
            a.max_rounds = self.max_rounds;
        }
        if let Some(r) = self.retrain {
            a.retrain = match r {
                RetrainArg::Every => RetrainPolicy::EveryRound,
                RetrainArg::Never => RetrainPolicy::Never,
            };
        }
        if let Some(cp) = &self.checkpoints {
            c.checkpoints = cp.clone();
        }
        if let Some(s) = &self.seed {
            c.seeds = s.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            bail!("duplicate seeds in {:?}", self.seeds);
        }
        if self.dataset.is_none() && self.sbm.is_none() {
            bail!("one of --dataset or --sbm is required");
        }
        if let Some(s) = &self.sbm {
            parse_sbm(s, 0)?;
        }
        let [a, b, t] = self.split;
        if a <= 0.0 || b < 0.0 || t <= 0.0 || a + b + t > 1.0 + 1e-9 {
            bail!("split fractions {:?} must be positive and sum to at most 1", self.split);
        }
        if self.checkpoints.is_empty() || self.checkpoints.contains(&0) {
            bail!("checkpoint rounds must be non-empty and >= 1");
        }
        self.attack_config.validate()?;
        self.args.validate()?;
        Ok(())
    }
}
