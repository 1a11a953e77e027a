//! Two-layer GCN `Z = softmax(Â relu(Â X W0) W1)` with masked weights and a
//! hand-written backward pass.
//!
//! The backward pass returns exact gradients with respect to the weights,
//! the weight masks and the edge mask. The edge-mask gradient includes the
//! dependence of the degree normalization on the mask values.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::adjacency::NormalizedAdjacency;
use crate::dense::{self, Matrix};
use crate::error::{Error, Result};
use crate::par;
use crate::rng;

/// Glorot-uniform initialization in `±sqrt(6 / (rows + cols))`.
pub fn init_weights(rows: usize, cols: usize, seed: u64) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let mut r = rng::rng(seed);
    Matrix::from_fn(rows, cols, |_, _| r.random_range(-limit..=limit))
}

/// GCN weights plus the initialization snapshot used for rewinding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnState {
    pub w0: Matrix,
    pub w1: Matrix,
    theta0: (Matrix, Matrix),
    seed: u64,
}

impl GcnState {
    pub fn new(num_features: usize, hidden: usize, num_classes: usize, seed: u64) -> Self {
        let w0 = init_weights(num_features, hidden, rng::sub_seed(seed, "w0"));
        let w1 = init_weights(hidden, num_classes, rng::sub_seed(seed, "w1"));
        Self::from_weights(w0, w1, seed)
    }

    /// Wrap explicit weights; the snapshot is taken now.
    pub fn from_weights(w0: Matrix, w1: Matrix, seed: u64) -> Self {
        assert_eq!(w0.cols(), w1.rows(), "hidden dimension mismatch");
        Self {
            theta0: (w0.clone(), w1.clone()),
            w0,
            w1,
            seed,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w0.cols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Initialization snapshot `Θ⁰`.
    pub fn init_snapshot(&self) -> (&Matrix, &Matrix) {
        (&self.theta0.0, &self.theta0.1)
    }

    /// Reset the weights to `Θ⁰` bitwise.
    pub fn rewind(&mut self) {
        self.w0.clone_from(&self.theta0.0);
        self.w1.clone_from(&self.theta0.1);
    }

    pub fn n_weights(&self) -> usize {
        self.w0.len() + self.w1.len()
    }
}

/// Real-valued masks over `W0` and `W1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMasks {
    pub w0: Matrix,
    pub w1: Matrix,
}

impl WeightMasks {
    pub fn ones_like(gcn: &GcnState) -> Self {
        Self {
            w0: Matrix::filled(gcn.w0.rows(), gcn.w0.cols(), 1.0),
            w1: Matrix::filled(gcn.w1.rows(), gcn.w1.cols(), 1.0),
        }
    }

    pub fn len(&self) -> usize {
        self.w0.len() + self.w1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat view: `W0` mask row-major followed by `W1` mask row-major.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w0.as_slice().iter().chain(self.w1.as_slice())
    }
}

/// Edge mask (one value per perturbed-graph edge) and weight masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPair {
    pub edge: Vec<f64>,
    pub weights: WeightMasks,
}

impl MaskPair {
    pub fn ones(n_edges: usize, gcn: &GcnState) -> Self {
        Self {
            edge: vec![1.0; n_edges],
            weights: WeightMasks::ones_like(gcn),
        }
    }

    pub fn graph_sparsity(&self) -> f64 {
        crate::adjacency::mask_sparsity(&self.edge)
    }

    pub fn model_sparsity(&self) -> f64 {
        let total = self.weights.len();
        if total == 0 {
            return 0.0;
        }
        let nnz = self.weights.iter().filter(|&&v| v != 0.0).count();
        1.0 - nnz as f64 / total as f64
    }
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct GcnCache {
    w1_eff: Matrix,
    /// `X · W0eff`
    xw: Matrix,
    /// `Â · X · W0eff` (pre-activation)
    p1: Matrix,
    h1: Matrix,
    /// `H1 · W1eff`
    hw: Matrix,
    logits: Matrix,
    /// softmax output
    pub z: Matrix,
}

impl GcnCache {
    pub fn logits(&self) -> &Matrix {
        &self.logits
    }
}

pub fn gcn_forward(
    adj: &NormalizedAdjacency,
    x: &Matrix,
    gcn: &GcnState,
    masks: &WeightMasks,
) -> Result<GcnCache> {
    if x.rows() != adj.n_nodes() || x.cols() != gcn.w0.rows() {
        return Err(Error::Dimension(format!(
            "features {:?} vs {} nodes and W0 {:?}",
            x.shape(),
            adj.n_nodes(),
            gcn.w0.shape()
        )));
    }
    if masks.w0.shape() != gcn.w0.shape() || masks.w1.shape() != gcn.w1.shape() {
        return Err(Error::Dimension("weight masks do not match weights".into()));
    }
    let w0_eff = gcn.w0.hadamard(&masks.w0);
    let w1_eff = gcn.w1.hadamard(&masks.w1);
    let xw = dense::matmul(x, &w0_eff);
    let p1 = adj.matmul(&xw);
    let h1 = p1.map(|v| v.max(0.0));
    let hw = dense::matmul(&h1, &w1_eff);
    let logits = adj.matmul(&hw);
    if !logits.all_finite() {
        return Err(Error::NonFinite("GCN logits"));
    }
    let z = dense::softmax_rows(&logits);
    Ok(GcnCache {
        w1_eff,
        xw,
        p1,
        h1,
        hw,
        logits,
        z,
    })
}

/// Gradients of a scalar loss. `edge` is empty unless requested.
#[derive(Debug, Clone)]
pub struct GcnGrads {
    pub w0: Matrix,
    pub w1: Matrix,
    pub mask_w0: Matrix,
    pub mask_w1: Matrix,
    pub edge: Vec<f64>,
}

/// Backpropagate `d_logits = ∂L/∂(pre-softmax logits)` through the network.
pub fn gcn_backward(
    adj: &NormalizedAdjacency,
    x: &Matrix,
    gcn: &GcnState,
    masks: &WeightMasks,
    cache: &GcnCache,
    d_logits: &Matrix,
    edge_grad: bool,
) -> Result<GcnGrads> {
    if d_logits.shape() != cache.logits.shape() || x.rows() != cache.xw.rows() {
        return Err(Error::Dimension("backward inputs do not match the forward cache".into()));
    }
    // layer 2: logits = Â · HW
    let d_hw = adj.matmul(d_logits);
    let d_w1_eff = dense::matmul_tn(&cache.h1, &d_hw);
    let d_h1 = dense::matmul_nt(&d_hw, &cache.w1_eff);
    let mut d_p1 = d_h1;
    for (g, &p) in d_p1.as_mut_slice().iter_mut().zip(cache.p1.as_slice()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    // layer 1: P1 = Â · XW
    let d_xw = adj.matmul(&d_p1);
    let d_w0_eff = dense::matmul_tn(x, &d_xw);

    let edge = if edge_grad {
        adjacency_grad(adj, &[(d_logits, &cache.hw), (&d_p1, &cache.xw)])
    } else {
        Vec::new()
    };

    let grads = GcnGrads {
        w0: d_w0_eff.hadamard(&masks.w0),
        w1: d_w1_eff.hadamard(&masks.w1),
        mask_w0: d_w0_eff.hadamard(&gcn.w0),
        mask_w1: d_w1_eff.hadamard(&gcn.w1),
        edge,
    };
    if !grads.w0.all_finite() || !grads.w1.all_finite() || grads.edge.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("GCN gradients"));
    }
    Ok(grads)
}

/// Gradient of the loss with respect to each edge's mask value, given the
/// products `Â · R` that appear in the network as pairs `(∂L/∂(Â·R), R)`.
///
/// With `S = Σ upstream · Rᵀ` restricted to the support of `Â`:
/// `∂L/∂d_i = −(1 / 2d_i) Σ_j (S_ij + S_ji) Â_ij` (diagonal counted once per
/// side) and `∂L/∂m_e = (S_ab + S_ba) / sqrt(d_a d_b) + ∂L/∂d_a + ∂L/∂d_b`.
pub fn adjacency_grad(adj: &NormalizedAdjacency, terms: &[(&Matrix, &Matrix)]) -> Vec<f64> {
    let exec = par::default_exec();
    let index = adj.index();
    let s = |i: usize, j: usize| -> f64 {
        terms
            .iter()
            .map(|(up, r)| dense::dot(up.row(i), r.row(j)))
            .sum()
    };
    let pair_sums: Vec<f64> = par::map_slice(exec, index.edges(), |&(a, b)| s(a, b) + s(b, a));
    let diag = adj.diag();
    let off = adj.edge_values();
    let degrees = adj.degrees();
    let d_deg: Vec<f64> = par::map_range(exec, adj.n_nodes(), |i| {
        let mut acc = 2.0 * s(i, i) * diag[i];
        for &(_, e) in index.neighbors(i) {
            acc += pair_sums[e] * off[e];
        }
        -acc / (2.0 * degrees[i])
    });
    let isd = adj.inv_sqrt_degrees();
    index
        .edges()
        .iter()
        .zip(&pair_sums)
        .map(|(&(a, b), &ps)| ps * isd[a] * isd[b] + d_deg[a] + d_deg[b])
        .collect()
}

/// Fraction of `nodes` whose argmax prediction equals the label.
pub fn accuracy(z: &Matrix, labels: &[usize], nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::EmptyIndex("accuracy node set"));
    }
    let correct = nodes
        .iter()
        .filter(|&&i| z.row_argmax(i) == labels[i])
        .count();
    Ok(correct as f64 / nodes.len() as f64)
}
