//! Projected-gradient topology attack against a surrogate GCN.
//!
//! Edge flips are relaxed to `s ∈ [0,1]^m` over candidate pairs, giving the
//! weighted adjacency `A + (1 − 2A) ∘ s`. The surrogate (trained once on the
//! clean graph) is held fixed while gradient ascent on its mean train-node
//! cross-entropy moves `s`; every step is followed by projection onto
//! `{0 ≤ s ≤ 1, Σs ≤ budget}`. Bernoulli draws from the final `s` give the
//! discrete attack.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{flip_budget, pair_count, pair_from_index, AttackConfig, PerturbedGraph};
use crate::adam::{AdamConfig, AdamState};
use crate::adjacency::{normalized_adjacency, EdgeIndex};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::gcn::{gcn_backward, gcn_forward, GcnState, WeightMasks};
use crate::graph::{Graph, NodeSplit};
use crate::losses::{ce_logit_grad, cross_entropy, Objective};
use crate::pseudo::PseudoLabels;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            epochs: 200,
            lr: 0.01,
        }
    }
}

/// Plain GCN training (mean train cross-entropy, Adam, all masks one).
pub fn train_surrogate(g: &Graph, split: &NodeSplit, cfg: &SurrogateConfig, seed: u64) -> Result<GcnState> {
    let index = Arc::new(EdgeIndex::new(g.n_nodes(), g.edges().to_vec())?);
    let obj = Objective::new(
        index,
        g.features().clone(),
        g.labels().to_vec(),
        split.train.clone(),
        &PseudoLabels::default(),
        false,
    )?;
    let mut gcn = GcnState::new(g.num_features(), cfg.hidden, g.num_classes(), seed);
    let masks = WeightMasks::ones_like(&gcn);
    let edge_mask = vec![1.0; g.n_edges()];
    let scale = 1.0 / split.train.len() as f64;
    let mut adam = AdamState::new(AdamConfig::default(), &[(cfg.lr, gcn.w0.len()), (cfg.lr, gcn.w1.len())]);
    for _ in 0..cfg.epochs {
        let (_, (d0, d1), _) = obj.retrain(&gcn, &edge_mask, &masks, scale, 0.0)?;
        adam.step(&mut [gcn.w0.as_mut_slice(), gcn.w1.as_mut_slice()], &[d0.as_slice(), d1.as_slice()]);
    }
    Ok(gcn)
}

/// Project onto `{s ∈ [0,1]^m : Σs ≤ budget}`. When the clamp alone exceeds
/// the budget, bisect on the shift `μ` in `clamp(s − μ, 0, 1)`; the upper end
/// of the final bracket is used so the budget holds. Returns the number of
/// bisection iterations (at most 64).
pub fn project_budget(s: &mut [f64], budget: f64) -> usize {
    let clamped_sum: f64 = s.iter().map(|v| v.clamp(0.0, 1.0)).sum();
    if clamped_sum <= budget {
        s.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        return 0;
    }
    let shifted = |mu: f64| -> f64 { s.iter().map(|v| (v - mu).clamp(0.0, 1.0)).sum() };
    let mut lo = s.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut iters = 0;
    while iters < 64 {
        iters += 1;
        let mid = 0.5 * (lo + hi);
        if shifted(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    s.iter_mut().for_each(|v| *v = (*v - hi).clamp(0.0, 1.0));
    iters
}

struct Relaxation {
    index: Arc<EdgeIndex>,
    /// Whether each index edge is a clean edge.
    is_edge: Vec<bool>,
    /// Candidate slot of each index edge, if it can be flipped.
    slot: Vec<Option<usize>>,
    /// Index edge id of each candidate.
    cand_edge: Vec<usize>,
}

impl Relaxation {
    fn build(g: &Graph, candidates: Vec<(usize, usize)>) -> Result<Self> {
        let mut all: Vec<(usize, usize)> = candidates.iter().copied().chain(g.edges().iter().copied()).collect();
        all.sort_unstable();
        all.dedup();
        let index = Arc::new(EdgeIndex::new(g.n_nodes(), all)?);
        let is_edge = index.edges().iter().map(|e| g.has_edge(e.0, e.1)).collect();
        let mut slot = vec![None; index.n_edges()];
        let mut cand_edge = Vec::with_capacity(candidates.len());
        for (k, c) in candidates.iter().enumerate() {
            let e = index.edges().binary_search(c).expect("candidate is indexed");
            slot[e] = Some(k);
            cand_edge.push(e);
        }
        Ok(Self {
            index,
            is_edge,
            slot,
            cand_edge,
        })
    }

    fn weights(&self, s: &[f64]) -> Vec<f64> {
        self.is_edge
            .iter()
            .zip(&self.slot)
            .map(|(&a, slot)| {
                let base = if a { 1.0 } else { 0.0 };
                match slot {
                    Some(k) => base + (1.0 - 2.0 * base) * s[*k],
                    None => base,
                }
            })
            .collect()
    }
}

struct AttackLoss<'a> {
    x: &'a Matrix,
    labels: &'a [usize],
    train: &'a [usize],
    gcn: &'a GcnState,
    masks: WeightMasks,
}

impl AttackLoss<'_> {
    fn targets(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.train.iter().map(|&i| (i, self.labels[i]))
    }

    fn value(&self, index: &Arc<EdgeIndex>, w: &[f64]) -> Result<f64> {
        let adj = normalized_adjacency(index, w)?;
        let c = gcn_forward(&adj, self.x, self.gcn, &self.masks)?;
        Ok(cross_entropy(&c.z, self.targets()) / self.train.len() as f64)
    }

    fn grad(&self, index: &Arc<EdgeIndex>, w: &[f64]) -> Result<Vec<f64>> {
        let adj = normalized_adjacency(index, w)?;
        let c = gcn_forward(&adj, self.x, self.gcn, &self.masks)?;
        let mut d = Matrix::zeros(c.z.rows(), c.z.cols());
        ce_logit_grad(&c.z, self.targets(), 1.0 / self.train.len() as f64, &mut d);
        Ok(gcn_backward(&adj, self.x, self.gcn, &self.masks, &c, &d, true)?.edge)
    }
}

/// Untargeted PGD poisoning within `floor(Δ·|E|)` flips. Deterministic per seed.
pub fn pgd_structure_attack(g: &Graph, split: &NodeSplit, cfg: &AttackConfig) -> Result<PerturbedGraph> {
    cfg.validate()?;
    let budget = flip_budget(cfg.ptb_rate, g.n_edges());
    if budget == 0 {
        return Ok(PerturbedGraph::clean(g.clone()));
    }
    if split.train.is_empty() {
        return Err(Error::EmptyIndex("train nodes"));
    }
    let n = g.n_nodes();
    let total = pair_count(n);
    let candidates: Vec<(usize, usize)> = if n <= cfg.max_dense_nodes {
        (0..total).map(|k| pair_from_index(k, n)).collect()
    } else {
        let mut r = rng::named_rng(cfg.seed, "pgd-candidates");
        let mut v: Vec<_> = rand::seq::index::sample(&mut r, total, (50 * budget).min(total))
            .into_iter()
            .map(|k| pair_from_index(k, n))
            .collect();
        v.sort_unstable();
        v
    };
    if candidates.is_empty() {
        return Err(Error::EmptyIndex("PGD candidate pairs"));
    }

    let surrogate = train_surrogate(g, split, &cfg.surrogate, rng::sub_seed(cfg.seed, "surrogate"))?;
    let loss = AttackLoss {
        x: g.features(),
        labels: g.labels(),
        train: &split.train,
        masks: WeightMasks::ones_like(&surrogate),
        gcn: &surrogate,
    };
    let relax = Relaxation::build(g, candidates)?;
    let m = relax.cand_edge.len();
    let mut s = vec![0.0; m];
    for t in 0..cfg.steps {
        let w = relax.weights(&s);
        let gw = loss.grad(&relax.index, &w)?;
        let lr = cfg.step_size / ((t + 1) as f64).sqrt();
        for (k, sk) in s.iter_mut().enumerate() {
            let e = relax.cand_edge[k];
            let sign = if relax.is_edge[e] { -1.0 } else { 1.0 };
            *sk += lr * sign * gw[e];
        }
        project_budget(&mut s, budget as f64);
    }

    // discretize: best feasible Bernoulli draw by attack loss
    let mut r = rng::named_rng(cfg.seed, "pgd-sampling");
    let mut best: Option<(f64, Vec<bool>)> = None;
    for _ in 0..cfg.sample_trials {
        let draw: Vec<bool> = s.iter().map(|&p| r.random::<f64>() < p).collect();
        let used = draw.iter().filter(|&&b| b).count();
        if used > budget {
            continue;
        }
        let w = relax.weights(&draw.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect::<Vec<_>>());
        let value = loss.value(&relax.index, &w)?;
        if best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, draw));
        }
    }
    let flips = match best {
        Some((_, draw)) => draw,
        None => {
            // no feasible draw: take the `budget` largest relaxed values
            let mut order: Vec<usize> = (0..m).filter(|&k| s[k] > 0.0).collect();
            order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
            let mut draw = vec![false; m];
            for &k in order.iter().take(budget) {
                draw[k] = true;
            }
            draw
        }
    };

    let mut added = Vec::new();
    let mut removed = Vec::new();
    for (k, &f) in flips.iter().enumerate() {
        if f {
            let e = relax.cand_edge[k];
            let pair = relax.index.edges()[e];
            if relax.is_edge[e] {
                removed.push(pair);
            } else {
                added.push(pair);
            }
        }
    }
    PerturbedGraph::new(g.clone(), added, removed)
}
