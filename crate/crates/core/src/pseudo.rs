//! Pseudo labels for test nodes from a feature-only MLP.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::dense::{self, Matrix};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeSplit};
use crate::losses::{ce_logit_grad, cross_entropy};
use crate::mlp::{self, MlpState};

/// High-confidence test-node predictions: node → (label, confidence).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PseudoLabels {
    entries: BTreeMap<usize, (usize, f64)>,
    threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct PseudoEntry {
    node: usize,
    label: usize,
    confidence: f64,
}

impl PseudoLabels {
    pub fn from_entries(entries: BTreeMap<usize, (usize, f64)>, threshold: f64) -> Self {
        Self { entries, threshold }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn get(&self, node: usize) -> Option<(usize, f64)> {
        self.entries.get(&node).copied()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.entries.contains_key(&node)
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.keys().copied()
    }

    /// `(node, label)` pairs in ascending node order.
    pub fn targets(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries.iter().map(|(&n, &(l, _))| (n, l))
    }

    /// Fraction of pseudo labels that agree with the true labels.
    pub fn accuracy(&self, labels: &[usize]) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let ok = self.targets().filter(|&(n, l)| labels[n] == l).count();
        Some(ok as f64 / self.len() as f64)
    }

    /// Array of `{node, label, confidence}`.
    pub fn to_json(&self) -> String {
        let v: Vec<PseudoEntry> = self
            .entries
            .iter()
            .map(|(&node, &(label, confidence))| PseudoEntry { node, label, confidence })
            .collect();
        serde_json::to_string_pretty(&v).expect("pseudo labels serialize")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::graph::write_file(path, &self.to_json())
    }

    pub fn load(path: &Path, threshold: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: Vec<PseudoEntry> = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            entries: v.into_iter().map(|e| (e.node, (e.label, e.confidence))).collect(),
            threshold,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    /// Hidden width; `None` means `min(1024, 4·F)`.
    pub hidden: Option<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: None,
            epochs: 200,
            lr: 0.01,
            patience: 30,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn resolved_hidden(&self, num_features: usize) -> usize {
        self.hidden.unwrap_or_else(|| 1024.min(4 * num_features).max(1))
    }
}

/// Train the MLP on train-node features with Adam on mean cross-entropy.
/// Keeps the weights from the epoch with the best validation accuracy and
/// stops after `patience` epochs without improvement.
pub fn train_mlp(g: &Graph, split: &NodeSplit, cfg: &MlpConfig) -> Result<MlpState> {
    if split.train.is_empty() {
        return Err(Error::EmptyIndex("train nodes"));
    }
    let x = g.features();
    let labels = g.labels();
    let hidden = cfg.resolved_hidden(g.num_features());
    let mut mlp = MlpState::new(g.num_features(), hidden, g.num_classes(), cfg.seed);
    if cfg.epochs == 0 {
        return Ok(mlp);
    }
    let x_train = Matrix::from_fn(split.train.len(), x.cols(), |r, c| x.get(split.train[r], c));
    let x_val = Matrix::from_fn(split.val.len(), x.cols(), |r, c| x.get(split.val[r], c));
    let targets: Vec<(usize, usize)> = split.train.iter().enumerate().map(|(r, &i)| (r, labels[i])).collect();
    let scale = 1.0 / split.train.len() as f64;

    let mut adam = AdamState::new(AdamConfig::default(), &[(cfg.lr, mlp.v0.len()), (cfg.lr, mlp.v1.len())]);
    let mut best = (f64::NEG_INFINITY, f64::INFINITY, mlp.clone());
    let mut since_best = 0;
    for _ in 0..cfg.epochs {
        let cache = mlp::forward_cached(&x_train, &mlp)?;
        let loss = scale * cross_entropy(&cache.probs, targets.iter().copied());
        if !loss.is_finite() {
            return Err(Error::NonFinite("MLP loss"));
        }
        let mut d_logits = Matrix::zeros(cache.probs.rows(), cache.probs.cols());
        ce_logit_grad(&cache.probs, targets.iter().copied(), scale, &mut d_logits);
        let (d0, d1) = mlp::backward(&x_train, &mlp, &cache, &d_logits);
        adam.step(
            &mut [mlp.v0.as_mut_slice(), mlp.v1.as_mut_slice()],
            &[d0.as_slice(), d1.as_slice()],
        );

        if split.val.is_empty() {
            continue;
        }
        let probs = mlp::mlp_forward(&x_val, &mlp)?;
        let correct = (0..split.val.len())
            .filter(|&r| probs.row_argmax(r) == labels[split.val[r]])
            .count();
        let acc = correct as f64 / split.val.len() as f64;
        let ce = cross_entropy(&probs, (0..split.val.len()).map(|r| (r, labels[split.val[r]])));
        // equal accuracy: lower validation loss wins
        if acc > best.0 || (acc == best.0 && ce < best.1) {
            best = (acc, ce, mlp.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok(if split.val.is_empty() { mlp } else { best.2 })
}

/// Test nodes whose maximum softmax probability is at least `tau`, labelled
/// with the argmax class (smallest class on ties).
pub fn select_pseudo_labels(mlp: &MlpState, g: &Graph, split: &NodeSplit, tau: f64) -> Result<PseudoLabels> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("threshold {tau} outside [0, 1]")));
    }
    let x = g.features();
    let x_test = Matrix::from_fn(split.test.len(), x.cols(), |r, c| x.get(split.test[r], c));
    let probs = mlp::mlp_forward(&x_test, mlp)?;
    Ok(select_from_probs(&probs, &split.test, tau))
}

pub(crate) fn select_from_probs(probs: &Matrix, nodes: &[usize], tau: f64) -> PseudoLabels {
    let mut entries = BTreeMap::new();
    for (r, &node) in nodes.iter().enumerate() {
        let row = probs.row(r);
        let label = dense::argmax(row);
        let confidence = row[label];
        if confidence >= tau {
            entries.insert(node, (label, confidence));
        }
    }
    if entries.is_empty() {
        log::warn!("no test node reached pseudo-label confidence {tau}");
    }
    PseudoLabels::from_entries(entries, tau)
}
