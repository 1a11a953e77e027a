//! Baseline adversaries: uniform random flips and greedy dissimilar-edge injection.

use std::cmp::Ordering;

use super::{flip_budget, pair_count, pair_from_index, AttackConfig, PerturbedGraph};
use crate::dense;
use crate::error::Result;
use crate::graph::Graph;
use crate::par;
use crate::rng;

/// Flip `floor(Δ·|E|)` node pairs chosen uniformly without replacement
/// (clamped to the number of pairs). A flipped pair is removed if it was an
/// edge and added otherwise.
pub fn random_flip_attack(g: &Graph, cfg: &AttackConfig) -> Result<PerturbedGraph> {
    cfg.validate()?;
    let n = g.n_nodes();
    let total = pair_count(n);
    let budget = flip_budget(cfg.ptb_rate, g.n_edges()).min(total);
    let mut r = rng::named_rng(cfg.seed, "random-flips");
    let mut picks: Vec<usize> = rand::seq::index::sample(&mut r, total, budget).into_vec();
    picks.sort_unstable();
    let (mut added, mut removed) = (Vec::new(), Vec::new());
    for k in picks {
        let (a, b) = pair_from_index(k, n);
        if g.has_edge(a, b) {
            removed.push((a, b));
        } else {
            added.push((a, b));
        }
    }
    PerturbedGraph::new(g.clone(), added, removed)
}

/// Spend the whole budget on additions: non-edges in decreasing order of
/// `‖x_i − x_j‖²`, ties broken by `(i, j)` ascending.
pub fn dissimilar_edge_attack(g: &Graph, cfg: &AttackConfig) -> Result<PerturbedGraph> {
    cfg.validate()?;
    let n = g.n_nodes();
    let x = g.features();
    let non_edges = pair_count(n) - g.n_edges();
    let budget = flip_budget(cfg.ptb_rate, g.n_edges()).min(non_edges);
    if budget == 0 {
        return Ok(PerturbedGraph::clean(g.clone()));
    }
    let rows: Vec<Vec<(f64, usize, usize)>> = par::map_range(par::default_exec(), n, |i| {
        (i + 1..n)
            .filter(|&j| !g.has_edge(i, j))
            .map(|j| (dense::squared_distance(x.row(i), x.row(j)), i, j))
            .collect()
    });
    let mut pairs: Vec<(f64, usize, usize)> = rows.into_iter().flatten().collect();
    let order = |a: &(f64, usize, usize), b: &(f64, usize, usize)| -> Ordering {
        b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2)))
    };
    if budget < pairs.len() {
        pairs.select_nth_unstable_by(budget, order);
        pairs.truncate(budget);
    }
    pairs.sort_by(order);
    PerturbedGraph::new(g.clone(), pairs.into_iter().map(|(_, i, j)| (i, j)), [])
}
