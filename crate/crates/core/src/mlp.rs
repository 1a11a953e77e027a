//! Two-layer perceptron `softmax(relu(X V0) V1)` on node features.

use serde::{Deserialize, Serialize};

use crate::dense::{self, Matrix};
use crate::error::{Error, Result};
use crate::gcn::init_weights;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpState {
    pub v0: Matrix,
    pub v1: Matrix,
}

impl MlpState {
    pub fn new(num_features: usize, hidden: usize, num_classes: usize, seed: u64) -> Self {
        Self {
            v0: init_weights(num_features, hidden, rng::sub_seed(seed, "v0")),
            v1: init_weights(hidden, num_classes, rng::sub_seed(seed, "v1")),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.v0.cols()
    }
}

pub(crate) struct MlpCache {
    pub pre: Matrix,
    pub hidden: Matrix,
    pub probs: Matrix,
}

pub(crate) fn forward_cached(x: &Matrix, mlp: &MlpState) -> Result<MlpCache> {
    if x.cols() != mlp.v0.rows() {
        return Err(Error::Dimension(format!(
            "{} feature columns for an MLP expecting {}",
            x.cols(),
            mlp.v0.rows()
        )));
    }
    let pre = dense::matmul(x, &mlp.v0);
    let hidden = pre.map(|v| v.max(0.0));
    let logits = dense::matmul(&hidden, &mlp.v1);
    if !logits.all_finite() {
        return Err(Error::NonFinite("MLP logits"));
    }
    let probs = dense::softmax_rows(&logits);
    Ok(MlpCache { pre, hidden, probs })
}

/// Class probabilities for each row of `x`.
pub fn mlp_forward(x: &Matrix, mlp: &MlpState) -> Result<Matrix> {
    forward_cached(x, mlp).map(|c| c.probs)
}

/// Gradients `(∂V0, ∂V1)` given `∂L/∂logits`.
pub(crate) fn backward(x: &Matrix, mlp: &MlpState, cache: &MlpCache, d_logits: &Matrix) -> (Matrix, Matrix) {
    let d_v1 = dense::matmul_tn(&cache.hidden, d_logits);
    let mut d_hidden = dense::matmul_nt(d_logits, &mlp.v1);
    for (g, &p) in d_hidden.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    let d_v0 = dense::matmul_tn(x, &d_hidden);
    (d_v0, d_v1)
}
