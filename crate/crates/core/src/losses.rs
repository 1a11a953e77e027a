//! Scalar objectives and their gradients.
//!
//! The sparsification objective is
//! `α·L0 + β·Lfs + γ·L1 + λ1·‖m_g‖₁ + λ2·‖m_θ‖₁` where `L0` is the
//! cross-entropy on train nodes, `Lfs` the mask-weighted feature smoothness
//! over edges and `L1` the cross-entropy against pseudo labels. Retraining a
//! ticket minimizes `η·L0 + ζ·L1` over the weights only.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adjacency::{normalized_adjacency, EdgeIndex};
use crate::dense::{self, Matrix};
use crate::error::{Error, Result};
use crate::gcn::{gcn_backward, gcn_forward, GcnCache, GcnState, MaskPair, WeightMasks};
use crate::pseudo::PseudoLabels;

/// Probabilities are clamped to this before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub zeta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.1,
            gamma: 1.0,
            eta: 1.0,
            zeta: 1.0,
            lambda1: 1e-2,
            lambda2: 1e-2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("eta", self.eta),
            ("zeta", self.zeta),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
        ];
        for (name, v) in all {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("loss weight {name}={v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l0: f64,
    pub lfs: f64,
    pub l1: f64,
    pub reg_g: f64,
    pub reg_theta: f64,
    pub total: f64,
}

/// `−Σ ln max(Z[node, label], floor)` over `(node, label)` targets.
pub fn cross_entropy(z: &Matrix, targets: impl IntoIterator<Item = (usize, usize)>) -> f64 {
    targets
        .into_iter()
        .map(|(node, label)| -z.get(node, label).max(PROB_FLOOR).ln())
        .sum()
}

/// Cross-entropy over the labeled train nodes.
pub fn ce_train(z: &Matrix, labels: &[usize], train_idx: &[usize]) -> Result<f64> {
    if train_idx.is_empty() {
        return Err(Error::EmptyIndex("train nodes"));
    }
    Ok(cross_entropy(z, train_idx.iter().map(|&i| (i, labels[i]))))
}

/// Cross-entropy against pseudo labels. An empty pseudo set contributes 0.
pub fn ce_pseudo(z: &Matrix, pseudo: &PseudoLabels) -> f64 {
    if pseudo.is_empty() {
        log::warn!("pseudo-label set is empty; the confidence threshold may be too strict");
        return 0.0;
    }
    cross_entropy(z, pseudo.targets())
}

/// Add `coef · ∂CE/∂logits` for the given targets into `out`.
pub fn ce_logit_grad(z: &Matrix, targets: impl IntoIterator<Item = (usize, usize)>, coef: f64, out: &mut Matrix) {
    if coef == 0.0 {
        return;
    }
    for (node, label) in targets {
        if z.get(node, label) < PROB_FLOOR {
            // clamped: the loss term is locally constant
            continue;
        }
        let zr = z.row(node);
        let orow = out.row_mut(node);
        for (c, (o, &p)) in orow.iter_mut().zip(zr).enumerate() {
            let y = if c == label { 1.0 } else { 0.0 };
            *o += coef * (p - y);
        }
    }
}

/// `‖x_i − x_j‖²` for every edge. With `normalize_rows`, features are first
/// scaled to unit L2 norm.
pub fn edge_feature_distances(edges: &[(usize, usize)], x: &Matrix, normalize_rows: bool) -> Vec<f64> {
    let normalized;
    let x = if normalize_rows {
        normalized = x.l2_normalized_rows();
        &normalized
    } else {
        x
    };
    crate::par::map_slice(crate::par::default_exec(), edges, |&(a, b)| {
        dense::squared_distance(x.row(a), x.row(b))
    })
}

/// `½ Σ_ij (m ⊙ A')_ij ‖x_i − x_j‖²`, i.e. `Σ_e m_e d_e` over undirected edges.
/// Its gradient with respect to `m_e` is `d_e`.
pub fn feature_smoothness(mask: &[f64], sq_dist: &[f64]) -> f64 {
    debug_assert_eq!(mask.len(), sq_dist.len());
    mask.iter().zip(sq_dist).map(|(m, d)| m * d).sum()
}

pub fn l1_norm<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    values.into_iter().map(|v| v.abs()).sum()
}

/// Subgradient of `|v|`, taken as 0 at 0.
#[inline]
pub fn l1_subgrad(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Weighted composition of precomputed component losses and the mask L1 terms.
pub fn args_total(l0: f64, lfs: f64, l1: f64, w: &LossWeights, masks: &MaskPair) -> LossBreakdown {
    let reg_g = l1_norm(&masks.edge);
    let reg_theta = l1_norm(masks.weights.iter());
    LossBreakdown {
        l0,
        lfs,
        l1,
        reg_g,
        reg_theta,
        total: w.alpha * l0 + w.beta * lfs + w.gamma * l1 + w.lambda1 * reg_g + w.lambda2 * reg_theta,
    }
}

/// `η·L0 + ζ·L1` on a forward pass with fixed masks.
pub fn retrain_loss(
    z: &Matrix,
    labels: &[usize],
    train_idx: &[usize],
    pseudo: &PseudoLabels,
    eta: f64,
    zeta: f64,
) -> Result<f64> {
    let l0 = ce_train(z, labels, train_idx)?;
    let l1 = if pseudo.is_empty() { 0.0 } else { cross_entropy(z, pseudo.targets()) };
    Ok(eta * l0 + zeta * l1)
}

/// Everything needed to evaluate the objectives on one (perturbed) graph.
#[derive(Debug, Clone)]
pub struct Objective {
    pub index: Arc<EdgeIndex>,
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub pseudo: Vec<(usize, usize)>,
    /// `‖x_a − x_b‖²` per edge of `index`.
    pub sq_dist: Vec<f64>,
}

impl Objective {
    pub fn new(
        index: Arc<EdgeIndex>,
        features: Matrix,
        labels: Vec<usize>,
        train: Vec<usize>,
        pseudo: &PseudoLabels,
        normalize_rows: bool,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyIndex("train nodes"));
        }
        if features.rows() != index.n_nodes() || labels.len() != index.n_nodes() {
            return Err(Error::Dimension("features/labels do not match the edge index".into()));
        }
        let sq_dist = edge_feature_distances(index.edges(), &features, normalize_rows);
        Ok(Self {
            index,
            features,
            labels,
            train,
            pseudo: pseudo.targets().collect(),
            sq_dist,
        })
    }

    fn train_targets(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.train.iter().map(|&i| (i, self.labels[i]))
    }

    /// Forward pass with the given masks.
    pub fn forward(&self, gcn: &GcnState, masks: &MaskPair) -> Result<GcnCache> {
        let adj = normalized_adjacency(&self.index, &masks.edge)?;
        gcn_forward(&adj, &self.features, gcn, &masks.weights)
    }

    /// Full sparsification objective and its gradient with respect to the
    /// weights, the weight masks and the edge mask.
    pub fn args(&self, gcn: &GcnState, masks: &MaskPair, w: &LossWeights) -> Result<(LossBreakdown, ArgsGrads, GcnCache)> {
        let adj = normalized_adjacency(&self.index, &masks.edge)?;
        let cache = gcn_forward(&adj, &self.features, gcn, &masks.weights)?;
        let z = &cache.z;
        let l0 = cross_entropy(z, self.train_targets());
        let lfs = feature_smoothness(&masks.edge, &self.sq_dist);
        let l1 = cross_entropy(z, self.pseudo.iter().copied());
        let breakdown = args_total(l0, lfs, l1, w, masks);
        if !breakdown.total.is_finite() {
            return Err(Error::NonFinite("objective"));
        }

        let mut d_logits = Matrix::zeros(z.rows(), z.cols());
        ce_logit_grad(z, self.train_targets(), w.alpha, &mut d_logits);
        ce_logit_grad(z, self.pseudo.iter().copied(), w.gamma, &mut d_logits);
        let g = gcn_backward(&adj, &self.features, gcn, &masks.weights, &cache, &d_logits, true)?;

        let mut edge = g.edge;
        for ((ge, &d), &m) in edge.iter_mut().zip(&self.sq_dist).zip(&masks.edge) {
            *ge += w.beta * d + w.lambda1 * l1_subgrad(m);
        }
        let mut mask_w0 = g.mask_w0;
        let mut mask_w1 = g.mask_w1;
        for (gm, &m) in mask_w0.as_mut_slice().iter_mut().zip(masks.weights.w0.as_slice()) {
            *gm += w.lambda2 * l1_subgrad(m);
        }
        for (gm, &m) in mask_w1.as_mut_slice().iter_mut().zip(masks.weights.w1.as_slice()) {
            *gm += w.lambda2 * l1_subgrad(m);
        }
        let grads = ArgsGrads {
            w0: g.w0,
            w1: g.w1,
            mask_w0,
            mask_w1,
            edge,
        };
        Ok((breakdown, grads, cache))
    }

    /// Ticket-retraining objective `η·L0 + ζ·L1` with fixed masks; returns the
    /// loss, `(∂W0, ∂W1)`, and the forward cache.
    pub fn retrain(
        &self,
        gcn: &GcnState,
        edge_mask: &[f64],
        weight_masks: &WeightMasks,
        eta: f64,
        zeta: f64,
    ) -> Result<(f64, (Matrix, Matrix), GcnCache)> {
        let adj = normalized_adjacency(&self.index, edge_mask)?;
        let cache = gcn_forward(&adj, &self.features, gcn, weight_masks)?;
        let z = &cache.z;
        let loss = eta * cross_entropy(z, self.train_targets()) + zeta * cross_entropy(z, self.pseudo.iter().copied());
        if !loss.is_finite() {
            return Err(Error::NonFinite("retraining loss"));
        }
        let mut d_logits = Matrix::zeros(z.rows(), z.cols());
        ce_logit_grad(z, self.train_targets(), eta, &mut d_logits);
        ce_logit_grad(z, self.pseudo.iter().copied(), zeta, &mut d_logits);
        let g = gcn_backward(&adj, &self.features, gcn, weight_masks, &cache, &d_logits, false)?;
        Ok((loss, (g.w0, g.w1), cache))
    }
}

/// Gradient of the sparsification objective.
#[derive(Debug, Clone)]
pub struct ArgsGrads {
    pub w0: Matrix,
    pub w1: Matrix,
    pub mask_w0: Matrix,
    pub mask_w1: Matrix,
    pub edge: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn uniform(n: usize, c: usize) -> Matrix {
        Matrix::filled(n, c, 1.0 / c as f64)
    }

    #[test]
    fn ce_uniform_one_hot_and_point_eight() {
        assert!((ce_train(&uniform(1, 4), &[2], &[0]).unwrap() - 4f64.ln()).abs() < 1e-12);
        let onehot = Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert_eq!(ce_train(&onehot, &[1], &[0]).unwrap(), 0.0);
        let z = Matrix::from_rows(&[vec![0.8, 0.2]]).unwrap();
        assert!((ce_train(&z, &[0], &[0]).unwrap() - 0.223_143_551_314_209_7).abs() < 1e-12);
        assert!(ce_train(&z, &[0], &[]).is_err());
    }

    #[test]
    fn ce_clamps_zero_probabilities() {
        let z = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let l = ce_train(&z, &[1], &[0]).unwrap();
        assert!((l + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn smoothness_hand_values() {
        let x = Matrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let d = edge_feature_distances(&[(0, 1)], &x, false);
        assert_eq!(feature_smoothness(&[1.0], &d), 4.0);
        assert_eq!(feature_smoothness(&[0.5], &d), 2.0);
        let same = Matrix::filled(3, 2, 0.7);
        let d = edge_feature_distances(&[(0, 1), (1, 2)], &same, false);
        assert_eq!(feature_smoothness(&[1.0, 1.0], &d), 0.0);
    }

    #[test]
    fn smoothness_brute_force_double_sum() {
        // ½ Σ_{i,j} A_ij ‖x_i − x_j‖² over the dense symmetric matrix
        let x = Matrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64).sqrt());
        let edges = [(0, 1), (0, 3), (2, 3)];
        let mask = [0.3, 1.0, 0.6];
        let mut a = Matrix::zeros(4, 4);
        for (&(i, j), &m) in edges.iter().zip(&mask) {
            a.set(i, j, m);
            a.set(j, i, m);
        }
        let mut want = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                want += 0.5 * a.get(i, j) * dense::squared_distance(x.row(i), x.row(j));
            }
        }
        let got = feature_smoothness(&mask, &edge_feature_distances(&edges, &x, false));
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn pseudo_ce_values() {
        assert_eq!(ce_pseudo(&uniform(2, 3), &PseudoLabels::default()), 0.0);
        let one = PseudoLabels::from_entries(BTreeMap::from([(1, (2, 0.9))]), 0.5);
        assert!((ce_pseudo(&uniform(2, 3), &one) - 3f64.ln()).abs() < 1e-12);
        let z = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.75, 0.25]]).unwrap();
        let two = PseudoLabels::from_entries(BTreeMap::from([(0, (0, 0.9)), (1, (1, 0.9))]), 0.5);
        assert!((ce_pseudo(&z, &two) - 2.079_441_541_679_836).abs() < 1e-12);
    }

    #[test]
    fn total_reduces_to_alpha_l0() {
        let gcn = GcnState::new(2, 3, 2, 0);
        let masks = MaskPair::ones(4, &gcn);
        let w = LossWeights {
            alpha: 2.0,
            beta: 0.0,
            gamma: 0.0,
            lambda1: 0.0,
            lambda2: 0.0,
            ..LossWeights::default()
        };
        let b = args_total(1.5, 9.0, 7.0, &w, &masks);
        assert_eq!(b.total, 3.0);
        assert_eq!(b.reg_g, 4.0);
        assert_eq!(b.reg_theta, 12.0);
    }

    #[test]
    fn subgradient_is_zero_at_zero() {
        assert_eq!(l1_subgrad(0.0), 0.0);
        assert_eq!(l1_subgrad(-0.3), -1.0);
        assert_eq!(l1_subgrad(2.0), 1.0);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights { beta: -1.0, ..Default::default() }.validate().is_err());
        assert!(LossWeights { eta: f64::NAN, ..Default::default() }.validate().is_err());
    }
}
