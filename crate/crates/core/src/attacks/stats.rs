//! Feature-difference histograms of clean versus adversarial edges.

use serde::Serialize;

use super::PerturbedGraph;
use crate::dense::{self, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureDiffHistogram {
    /// `bins + 1` shared bin edges.
    pub bin_edges: Vec<f64>,
    /// Probability mass per bin for surviving clean edges.
    pub clean: Vec<f64>,
    /// Probability mass per bin for added edges; all zero when there are none.
    pub adversarial: Vec<f64>,
    pub adversarial_empty: bool,
    pub mean_clean: f64,
    pub mean_adversarial: f64,
}

/// Histogram `‖x_i − x_j‖²` (row-normalized features if `normalize_rows`)
/// over clean and adversarial edges with common bins on `[0, max]`.
pub fn feature_diff_histogram(pg: &PerturbedGraph, bins: usize, normalize_rows: bool) -> FeatureDiffHistogram {
    let bins = bins.max(1);
    let base = pg.base();
    let normalized: Matrix;
    let x = if normalize_rows {
        normalized = base.features().l2_normalized_rows();
        &normalized
    } else {
        base.features()
    };
    let diff = |&(a, b): &(usize, usize)| dense::squared_distance(x.row(a), x.row(b));
    let clean: Vec<f64> = base
        .edges()
        .iter()
        .filter(|e| !pg.removed().contains(e))
        .map(diff)
        .collect();
    let adv: Vec<f64> = pg.added().iter().map(diff).collect();
    let mut hi = clean.iter().chain(&adv).cloned().fold(0.0, f64::max);
    if hi <= 0.0 {
        hi = 1.0;
    }
    let width = hi / bins as f64;
    let bin_edges = (0..=bins).map(|k| k as f64 * width).collect();
    let hist = |vals: &[f64]| -> Vec<f64> {
        let mut h = vec![0.0; bins];
        for &v in vals {
            let k = ((v / width) as usize).min(bins - 1);
            h[k] += 1.0;
        }
        if !vals.is_empty() {
            h.iter_mut().for_each(|c| *c /= vals.len() as f64);
        }
        h
    };
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    FeatureDiffHistogram {
        bin_edges,
        clean: hist(&clean),
        adversarial: hist(&adv),
        adversarial_empty: adv.is_empty(),
        mean_clean: mean(&clean),
        mean_adversarial: mean(&adv),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{dissimilar_edge_attack, AttackConfig};
    use crate::graph::{generate_sbm, Graph, SbmParams};

    #[test]
    fn no_attack_has_empty_adversarial_histogram() {
        let g = Graph::new([(0, 1), (1, 2)], Matrix::from_fn(3, 2, |i, j| (i + j) as f64), vec![0; 3], 1).unwrap();
        let h = feature_diff_histogram(&PerturbedGraph::clean(g), 4, false);
        assert!(h.adversarial_empty);
        assert!(h.adversarial.iter().all(|&v| v == 0.0));
        assert!((h.clean.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(h.bin_edges.len(), 5);
    }

    #[test]
    fn identical_features_fall_in_first_bin() {
        let g = Graph::new([(0, 1), (1, 2)], Matrix::filled(4, 2, 1.0), vec![0; 4], 1).unwrap();
        let pg = PerturbedGraph::new(g, [(0, 3)], []).unwrap();
        let h = feature_diff_histogram(&pg, 5, false);
        assert_eq!(h.clean[0], 1.0);
        assert_eq!(h.adversarial[0], 1.0);
    }

    #[test]
    fn dissimilar_attack_shifts_mass_up() {
        let g = generate_sbm(&SbmParams {
            blocks: 3,
            nodes_per_block: 30,
            p_in: 0.2,
            p_out: 0.01,
            feature_dim: 9,
            feature_noise: 0.3,
            seed: 4,
        })
        .unwrap();
        let pg = dissimilar_edge_attack(&g, &AttackConfig { ptb_rate: 0.2, ..Default::default() }).unwrap();
        let h = feature_diff_histogram(&pg, 10, false);
        assert!(h.mean_adversarial > h.mean_clean);
    }
}
