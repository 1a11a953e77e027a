#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use arglt::adjacency::EdgeIndex;
use arglt::dense::Matrix;
use arglt::gcn::{GcnState, MaskPair};
use arglt::graph::{generate_sbm, make_split, Graph, NodeSplit, SbmParams};
use arglt::losses::Objective;
use arglt::pseudo::PseudoLabels;
use arglt::rng;
use rand::Rng;

/// Small random problem with real-valued masks in `[0.1, 1]`.
pub struct Instance {
    pub obj: Objective,
    pub gcn: GcnState,
    pub masks: MaskPair,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut r = rng::rng(seed);
    let n = r.random_range(2..=20);
    let f = r.random_range(1..=6);
    let h = r.random_range(1..=8);
    let c = r.random_range(2..=4);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random::<f64>() < 0.3 {
                edges.push((i, j));
            }
        }
    }
    let features = Matrix::from_fn(n, f, |_, _| r.random_range(-1.0..1.0));
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|_| r.random::<u32>());
    let n_train = (n / 2).max(1);
    let train = order[..n_train].to_vec();
    let mut pseudo = BTreeMap::new();
    for &i in &order[n_train..] {
        if r.random::<f64>() < 0.6 {
            pseudo.insert(i, (r.random_range(0..c), 0.9));
        }
    }
    let index = Arc::new(EdgeIndex::new(n, edges).unwrap());
    let obj = Objective::new(
        index.clone(),
        features,
        labels,
        train,
        &PseudoLabels::from_entries(pseudo, 0.8),
        false,
    )
    .unwrap();
    let gcn = GcnState::new(f, h, c, r.random());
    let mut masks = MaskPair::ones(index.n_edges(), &gcn);
    for v in masks.edge.iter_mut() {
        *v = r.random_range(0.1..=1.0);
    }
    for v in masks.weights.w0.as_mut_slice().iter_mut().chain(masks.weights.w1.as_mut_slice()) {
        *v = r.random_range(0.1..=1.0);
    }
    Instance { obj, gcn, masks }
}

pub fn sbm(blocks: usize, per_block: usize, p_in: f64, p_out: f64, dim: usize, noise: f64, seed: u64) -> (Graph, NodeSplit) {
    let g = generate_sbm(&SbmParams {
        blocks,
        nodes_per_block: per_block,
        p_in,
        p_out,
        feature_dim: dim,
        feature_noise: noise,
        seed,
    })
    .unwrap();
    let split = make_split(g.n_nodes(), (0.1, 0.1, 0.8), rng::sub_seed(seed, "split")).unwrap();
    (g, split)
}
