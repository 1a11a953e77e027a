//! Adam with per-group learning rates.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Moment accumulators for a fixed list of parameter groups.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    cfg: AdamConfig,
    step: u64,
    groups: Vec<Moments>,
}

impl AdamState {
    /// One group per `(learning rate, parameter count)`.
    pub fn new(cfg: AdamConfig, groups: &[(f64, usize)]) -> Self {
        Self {
            cfg,
            step: 0,
            groups: groups
                .iter()
                .map(|&(lr, n)| Moments {
                    lr,
                    m: vec![0.0; n],
                    v: vec![0.0; n],
                })
                .collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of every group.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), self.groups.len(), "parameter group count");
        assert_eq!(grads.len(), self.groups.len(), "gradient group count");
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((group, p), g) in self.groups.iter_mut().zip(params.iter_mut()).zip(grads) {
            assert_eq!(p.len(), group.m.len(), "parameter shape");
            assert_eq!(g.len(), group.m.len(), "gradient shape");
            for i in 0..p.len() {
                let gi = g[i];
                group.m[i] = beta1 * group.m[i] + (1.0 - beta1) * gi;
                group.v[i] = beta2 * group.v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = group.m[i] / bc1;
                let v_hat = group.v[i] / bc2;
                p[i] -= group.lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
