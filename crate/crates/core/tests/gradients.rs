//! Analytic gradients of the sparsification objective against central
//! finite differences.

mod common;

use arglt::gcn::{GcnState, MaskPair};
use arglt::losses::LossWeights;
use common::{random_instance, Instance};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
/// Denominator floor for the relative error; below it the comparison is absolute.
const FLOOR: f64 = 1e-8;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

#[derive(Clone, Copy, Debug)]
enum Param {
    W0,
    W1,
    MaskW0,
    MaskW1,
    Edge,
}

fn slot<'a>(p: Param, gcn: &'a mut GcnState, m: &'a mut MaskPair) -> &'a mut [f64] {
    match p {
        Param::W0 => gcn.w0.as_mut_slice(),
        Param::W1 => gcn.w1.as_mut_slice(),
        Param::MaskW0 => m.weights.w0.as_mut_slice(),
        Param::MaskW1 => m.weights.w1.as_mut_slice(),
        Param::Edge => &mut m.edge,
    }
}

/// Largest relative error over every parameter of one instance.
fn worst_error(inst: &Instance, w: &LossWeights) -> (f64, Param, usize) {
    let (_, grads, _) = inst.obj.args(&inst.gcn, &inst.masks, w).unwrap();
    let mut worst = (0.0, Param::W0, 0);
    for p in [Param::W0, Param::W1, Param::MaskW0, Param::MaskW1, Param::Edge] {
        let analytic: &[f64] = match p {
            Param::W0 => grads.w0.as_slice(),
            Param::W1 => grads.w1.as_slice(),
            Param::MaskW0 => grads.mask_w0.as_slice(),
            Param::MaskW1 => grads.mask_w1.as_slice(),
            Param::Edge => &grads.edge,
        };
        for (k, &a) in analytic.iter().enumerate() {
            let eval = |delta: f64| {
                let mut gcn = inst.gcn.clone();
                let mut masks = inst.masks.clone();
                slot(p, &mut gcn, &mut masks)[k] += delta;
                inst.obj.args(&gcn, &masks, w).unwrap().0.total
            };
            let numeric = (eval(H) - eval(-H)) / (2.0 * H);
            let e = rel_err(a, numeric);
            if e > worst.0 {
                worst = (e, p, k);
            }
        }
    }
    worst
}

#[test]
fn fifty_random_instances_match_finite_differences() {
    let w = LossWeights::default();
    for seed in 0..50 {
        let inst = random_instance(seed);
        let (e, p, k) = worst_error(&inst, &w);
        assert!(e <= TOL, "instance {seed}: {p:?}[{k}] relative error {e:e}");
    }
}

#[test]
fn nonunit_loss_weights_match_finite_differences() {
    let w = LossWeights {
        alpha: 0.7,
        beta: 2.5,
        gamma: 0.3,
        lambda1: 0.2,
        lambda2: 0.05,
        ..LossWeights::default()
    };
    for seed in 100..110 {
        let inst = random_instance(seed);
        let (e, p, k) = worst_error(&inst, &w);
        assert!(e <= TOL, "instance {seed}: {p:?}[{k}] relative error {e:e}");
    }
}

#[test]
fn retrain_gradient_matches_finite_differences() {
    for seed in 200..210 {
        let inst = random_instance(seed);
        let (eta, zeta) = (1.3, 0.4);
        let (_, (d0, d1), _) = inst
            .obj
            .retrain(&inst.gcn, &inst.masks.edge, &inst.masks.weights, eta, zeta)
            .unwrap();
        for (which, analytic) in [(0, d0.as_slice()), (1, d1.as_slice())] {
            for (k, &a) in analytic.iter().enumerate() {
                let eval = |delta: f64| {
                    let mut gcn = inst.gcn.clone();
                    let s = if which == 0 { gcn.w0.as_mut_slice() } else { gcn.w1.as_mut_slice() };
                    s[k] += delta;
                    inst.obj.retrain(&gcn, &inst.masks.edge, &inst.masks.weights, eta, zeta).unwrap().0
                };
                let numeric = (eval(H) - eval(-H)) / (2.0 * H);
                assert!(rel_err(a, numeric) <= TOL, "instance {seed}: W{which}[{k}] {a} vs {numeric}");
            }
        }
    }
}
