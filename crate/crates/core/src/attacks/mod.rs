//! Structure poisoning attacks and attack statistics.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{floor_count, Graph, NodeRole, NodeSplit};

mod baseline;
mod pgd;
mod stats;

pub use baseline::{dissimilar_edge_attack, random_flip_attack};
pub use pgd::{pgd_structure_attack, project_budget, train_surrogate, SurrogateConfig};
pub use stats::{feature_diff_histogram, FeatureDiffHistogram};

/// Flip budget `floor(Δ·|E|)` in undirected edges.
pub fn flip_budget(ptb_rate: f64, n_edges: usize) -> usize {
    floor_count(ptb_rate, n_edges)
}

/// Number of unordered node pairs.
pub(crate) fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// The `k`-th pair `(i, j)`, `i < j`, in row-major order over the upper triangle.
pub(crate) fn pair_from_index(mut k: usize, n: usize) -> (usize, usize) {
    for i in 0..n {
        let row = n - 1 - i;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
    }
    panic!("pair index out of range");
}

/// A clean graph plus the set of flipped edges.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedGraph {
    base: Graph,
    added: BTreeSet<(usize, usize)>,
    removed: BTreeSet<(usize, usize)>,
}

impl PerturbedGraph {
    pub fn clean(base: Graph) -> Self {
        Self {
            base,
            added: BTreeSet::new(),
            removed: BTreeSet::new(),
        }
    }

    /// Validate and build. Pairs are canonicalized to `i < j`.
    pub fn new(
        base: Graph,
        added: impl IntoIterator<Item = (usize, usize)>,
        removed: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let n = base.n_nodes();
        let canon = |(a, b): (usize, usize)| -> Result<(usize, usize)> {
            if a == b || a >= n || b >= n {
                return Err(Error::InvalidGraph(format!("invalid flip ({a}, {b}) for {n} nodes")));
            }
            Ok((a.min(b), a.max(b)))
        };
        let added = added.into_iter().map(canon).collect::<Result<BTreeSet<_>>>()?;
        let removed = removed.into_iter().map(canon).collect::<Result<BTreeSet<_>>>()?;
        if let Some(e) = added.iter().find(|e| base.has_edge(e.0, e.1)) {
            return Err(Error::InvalidGraph(format!("added edge {e:?} already exists")));
        }
        if let Some(e) = removed.iter().find(|e| !base.has_edge(e.0, e.1)) {
            return Err(Error::InvalidGraph(format!("removed edge {e:?} not in the graph")));
        }
        Ok(Self { base, added, removed })
    }

    pub fn base(&self) -> &Graph {
        &self.base
    }

    pub fn added(&self) -> &BTreeSet<(usize, usize)> {
        &self.added
    }

    pub fn removed(&self) -> &BTreeSet<(usize, usize)> {
        &self.removed
    }

    pub fn budget_used(&self) -> usize {
        self.added.len() + self.removed.len()
    }

    /// Sorted canonical edges of the poisoned graph.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<_> = self
            .base
            .edges()
            .iter()
            .filter(|e| !self.removed.contains(e))
            .copied()
            .chain(self.added.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_adversarial(&self, e: &(usize, usize)) -> bool {
        self.added.contains(e)
    }

    pub fn poisoned_graph(&self) -> Graph {
        self.base.with_edges(self.edges()).expect("perturbed edges are valid")
    }

    pub fn within_budget(&self, ptb_rate: f64) -> bool {
        self.budget_used() <= flip_budget(ptb_rate, self.base.n_edges())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// Perturbation rate Δ.
    pub ptb_rate: f64,
    /// PGD iterations.
    pub steps: usize,
    /// PGD base step; iteration `t` uses `step_size / sqrt(t + 1)`.
    pub step_size: f64,
    /// Bernoulli discretization draws.
    pub sample_trials: usize,
    pub seed: u64,
    pub surrogate: SurrogateConfig,
    /// Above this node count PGD samples `50·budget` candidate pairs instead of all pairs.
    pub max_dense_nodes: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            ptb_rate: 0.05,
            steps: 100,
            step_size: 200.0,
            sample_trials: 20,
            seed: 0,
            surrogate: SurrogateConfig::default(),
            max_dense_nodes: 3000,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ptb_rate) {
            return Err(Error::Config(format!("perturbation rate {} outside [0, 1]", self.ptb_rate)));
        }
        if !(self.step_size.is_finite() && self.step_size >= 0.0) {
            return Err(Error::Config("PGD step size must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeCategoryCounts {
    pub train_train: usize,
    pub train_test: usize,
    pub test_test: usize,
}

impl EdgeCategoryCounts {
    pub fn total(&self) -> usize {
        self.train_train + self.train_test + self.test_test
    }
}

/// Count adversarial (added) edges whose mask value is nonzero, by endpoint
/// membership. Validation nodes count as test nodes. `edge_mask` is aligned
/// with [`PerturbedGraph::edges`].
pub fn edge_category_counts(pg: &PerturbedGraph, split: &NodeSplit, edge_mask: &[f64]) -> Result<EdgeCategoryCounts> {
    let edges = pg.edges();
    if edges.len() != edge_mask.len() {
        return Err(Error::Dimension(format!(
            "{} mask values for {} perturbed edges",
            edge_mask.len(),
            edges.len()
        )));
    }
    let roles = split.roles(pg.base.n_nodes());
    let mut c = EdgeCategoryCounts::default();
    for (e, &m) in edges.iter().zip(edge_mask) {
        if m == 0.0 || !pg.is_adversarial(e) {
            continue;
        }
        let t = |i: usize| roles[i] == NodeRole::Train;
        match (t(e.0), t(e.1)) {
            (true, true) => c.train_train += 1,
            (false, false) => c.test_test += 1,
            _ => c.train_test += 1,
        }
    }
    Ok(c)
}

/// On-disk exchange format for attacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackFile {
    #[serde(alias = "Δ", alias = "ptb_rate")]
    pub delta: f64,
    pub seed: u64,
    pub attack_name: String,
    pub added: Vec<[usize; 2]>,
    pub removed: Vec<[usize; 2]>,
}

impl AttackFile {
    pub fn from_perturbed(pg: &PerturbedGraph, name: &str, delta: f64, seed: u64) -> Self {
        Self {
            delta,
            seed,
            attack_name: name.to_string(),
            added: pg.added.iter().map(|&(a, b)| [a, b]).collect(),
            removed: pg.removed.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }

    pub fn apply(&self, base: Graph) -> Result<PerturbedGraph> {
        let pg = PerturbedGraph::new(
            base,
            self.added.iter().map(|p| (p[0], p[1])),
            self.removed.iter().map(|p| (p[0], p[1])),
        )?;
        if !pg.within_budget(self.delta) {
            log::warn!(
                "attack file uses {} flips, above floor(Δ·|E|) for Δ={}",
                pg.budget_used(),
                self.delta
            );
        }
        Ok(pg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("attack file serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::graph::write_file(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}
