//! Iterative joint pruning of edges and weights.
//!
//! Each round rewinds the weights to `Θ⁰`, trains weights and both masks on
//! the full objective for up to `T` epochs, then zeroes the lowest-magnitude
//! fraction of each mask and sets the survivors back to one. Tickets are
//! retrained with the masks frozen.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::adjacency::EdgeIndex;
use crate::attacks::{edge_category_counts, EdgeCategoryCounts, PerturbedGraph};
use crate::error::{Error, Result};
use crate::gcn::{accuracy, GcnState, MaskPair};
use crate::graph::{floor_count, NodeSplit};
use crate::losses::{cross_entropy, LossBreakdown, LossWeights, Objective};
use crate::par;
use crate::pseudo::{MlpConfig, PseudoLabels};
use crate::rng;

/// When the round loop stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopGuard {
    /// Continue while both sparsities are below target; prune both each round.
    Both,
    /// Continue while either is below target; a mask whose target is met stops being pruned.
    Either,
}

/// Which rounds get a retrained ticket.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrainPolicy {
    Never,
    EveryRound,
    Rounds(Vec<usize>),
}

impl RetrainPolicy {
    fn applies(&self, round: usize) -> bool {
        match self {
            RetrainPolicy::Never => false,
            RetrainPolicy::EveryRound => true,
            RetrainPolicy::Rounds(r) => r.contains(&round),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArgsConfig {
    pub weights: LossWeights,
    /// Per-round edge prune rate.
    pub p_g: f64,
    /// Per-round weight prune rate.
    pub p_theta: f64,
    /// Target graph sparsity.
    pub s_g: f64,
    /// Target model sparsity.
    pub s_theta: f64,
    /// Mask-training epochs per round (T).
    pub epochs: usize,
    /// Weight learning rate (μ).
    pub lr_weights: f64,
    /// Edge-mask learning rate (ω_g).
    pub lr_edge_mask: f64,
    /// Weight-mask learning rate (ω_θ).
    pub lr_weight_mask: f64,
    pub patience: usize,
    /// Pseudo-label confidence threshold.
    pub tau: f64,
    pub hidden: usize,
    pub seed: u64,
    pub guard: LoopGuard,
    pub max_rounds: Option<usize>,
    pub retrain: RetrainPolicy,
    pub retrain_epochs: usize,
    /// Row-normalize features before measuring edge feature differences.
    pub normalize_features: bool,
    pub mlp: MlpConfig,
}

impl Default for ArgsConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            p_g: 0.05,
            p_theta: 0.2,
            s_g: 0.6,
            s_theta: 0.99,
            epochs: 200,
            lr_weights: 1e-2,
            lr_edge_mask: 1e-2,
            lr_weight_mask: 1e-2,
            patience: 30,
            tau: 0.8,
            hidden: 512,
            seed: 0,
            guard: LoopGuard::Both,
            max_rounds: None,
            retrain: RetrainPolicy::EveryRound,
            retrain_epochs: 200,
            normalize_features: false,
            mlp: MlpConfig::default(),
        }
    }
}

impl ArgsConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let open = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name}={v} must lie in (0, 1)")))
            }
        };
        open("p_g", self.p_g)?;
        open("p_theta", self.p_theta)?;
        open("s_g", self.s_g)?;
        open("s_theta", self.s_theta)?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs per round must be >= 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau={} outside [0, 1]", self.tau)));
        }
        Ok(())
    }

    /// Upper bound on the number of rounds for the configured rates and targets.
    pub fn round_bound(&self) -> usize {
        let bound = |s: f64, p: f64| ((1.0 - s).ln() / (1.0 - p).ln()).ceil() as usize + 1;
        let b = match self.guard {
            LoopGuard::Both => bound(self.s_g, self.p_g).min(bound(self.s_theta, self.p_theta)),
            LoopGuard::Either => bound(self.s_g, self.p_g).max(bound(self.s_theta, self.p_theta)),
        };
        self.max_rounds.map_or(b, |m| m.min(b))
    }
}

/// Perturbed graph, split and pseudo labels prepared for sparsification.
#[derive(Debug, Clone)]
pub struct ArgsProblem {
    pub pg: PerturbedGraph,
    pub split: NodeSplit,
    pub pseudo: PseudoLabels,
    pub objective: Objective,
}

impl ArgsProblem {
    pub fn new(pg: PerturbedGraph, split: NodeSplit, pseudo: PseudoLabels, normalize_features: bool) -> Result<Self> {
        let base = pg.base();
        if let Some(n) = pseudo.nodes().find(|n| !split.test.contains(n)) {
            return Err(Error::Config(format!("pseudo label on non-test node {n}")));
        }
        let index = Arc::new(EdgeIndex::new(base.n_nodes(), pg.edges())?);
        let objective = Objective::new(
            index,
            base.features().clone(),
            base.labels().to_vec(),
            split.train.clone(),
            &pseudo,
            normalize_features,
        )?;
        Ok(Self {
            pg,
            split,
            pseudo,
            objective,
        })
    }

    pub fn n_edges(&self) -> usize {
        self.objective.index.n_edges()
    }

    pub fn num_features(&self) -> usize {
        self.objective.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.pg.base().num_classes()
    }

    /// Edges of the perturbed graph, aligned with the edge mask.
    pub fn edges(&self) -> &[(usize, usize)] {
        self.objective.index.edges()
    }
}

/// Prune `rate` of the nonzero entries with the smallest `|value|` (ties:
/// smaller index first) and set the remaining nonzero entries to one.
/// At least one entry is pruned while any remain. Returns the prune count.
pub fn prune_values(values: &mut [f64], rate: f64) -> usize {
    let mut active: Vec<usize> = (0..values.len()).filter(|&i| values[i] != 0.0).collect();
    if active.is_empty() {
        return 0;
    }
    let k = floor_count(rate, active.len()).max(1).min(active.len());
    active.sort_by(|&a, &b| values[a].abs().total_cmp(&values[b].abs()).then(a.cmp(&b)));
    for &i in &active[..k] {
        values[i] = 0.0;
    }
    for &i in &active[k..] {
        values[i] = 1.0;
    }
    k
}

/// Set every nonzero entry to one.
fn binarize(values: &mut [f64]) {
    values.iter_mut().filter(|v| **v != 0.0).for_each(|v| *v = 1.0);
}

/// Prune both masks. The weight masks are treated as one flat vector
/// (`W0` row-major, then `W1`).
pub fn prune_masks(m: &MaskPair, p_g: f64, p_theta: f64) -> MaskPair {
    prune_selected(m, Some(p_g), Some(p_theta))
}

fn prune_selected(m: &MaskPair, p_g: Option<f64>, p_theta: Option<f64>) -> MaskPair {
    let mut out = m.clone();
    match p_g {
        Some(p) => {
            prune_values(&mut out.edge, p);
        }
        None => binarize(&mut out.edge),
    }
    let n0 = out.weights.w0.len();
    let mut flat: Vec<f64> = out.weights.iter().copied().collect();
    match p_theta {
        Some(p) => {
            prune_values(&mut flat, p);
        }
        None => binarize(&mut flat),
    }
    out.weights.w0.as_mut_slice().copy_from_slice(&flat[..n0]);
    out.weights.w1.as_mut_slice().copy_from_slice(&flat[n0..]);
    out
}

/// Reset weights to `Θ⁰`. Optimizer state is owned by each training loop and
/// starts fresh with it.
pub fn rewind(gcn: &mut GcnState) {
    gcn.rewind();
}

/// Argmax accuracy of the masked network on `nodes`.
pub fn evaluate(gcn: &GcnState, masks: &MaskPair, problem: &ArgsProblem, nodes: &[usize]) -> Result<f64> {
    let cache = problem.objective.forward(gcn, masks)?;
    accuracy(&cache.z, &problem.objective.labels, nodes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TicketAccuracy {
    /// Best validation accuracy seen during retraining.
    pub val_acc: f64,
    /// Test accuracy at the best-validation epoch.
    pub test_acc: f64,
    pub final_val_acc: f64,
    pub final_test_acc: f64,
    pub epochs: usize,
}

/// Retrain a ticket from `Θ⁰` on `η·L0 + ζ·L1` with the masks frozen.
/// Returns the best-validation weights and the accuracies.
pub fn retrain_ticket(
    problem: &ArgsProblem,
    masks: &MaskPair,
    init: &GcnState,
    cfg: &ArgsConfig,
) -> Result<(GcnState, TicketAccuracy)> {
    let mut gcn = init.clone();
    gcn.rewind();
    let obj = &problem.objective;
    let (val, test) = (&problem.split.val, &problem.split.test);
    let mut adam = AdamState::new(
        AdamConfig::default(),
        &[(cfg.lr_weights, gcn.w0.len()), (cfg.lr_weights, gcn.w1.len())],
    );
    let mut best: Option<(f64, f64, f64, GcnState)> = None;
    let mut since_best = 0;
    let mut epochs = 0;
    for _ in 0..cfg.retrain_epochs {
        let (_, (d0, d1), cache) = obj.retrain(&gcn, &masks.edge, &masks.weights, cfg.weights.eta, cfg.weights.zeta)?;
        if !val.is_empty() {
            // accuracies of the weights that produced this forward pass
            let v = accuracy(&cache.z, &obj.labels, val)?;
            let ce = cross_entropy(&cache.z, val.iter().map(|&i| (i, obj.labels[i])));
            // equal accuracy: lower validation loss wins
            if best.as_ref().is_none_or(|(bv, bce, _, _)| v > *bv || (v == *bv && ce < *bce)) {
                let t = if test.is_empty() { 0.0 } else { accuracy(&cache.z, &obj.labels, test)? };
                best = Some((v, ce, t, gcn.clone()));
                since_best = 0;
            } else {
                since_best += 1;
            }
            if since_best >= cfg.patience {
                break;
            }
        }
        adam.step(&mut [gcn.w0.as_mut_slice(), gcn.w1.as_mut_slice()], &[d0.as_slice(), d1.as_slice()]);
        epochs += 1;
    }
    let acc_of = |g: &GcnState, nodes: &[usize]| -> Result<f64> {
        if nodes.is_empty() {
            Ok(0.0)
        } else {
            evaluate(g, masks, problem, nodes)
        }
    };
    let final_val_acc = acc_of(&gcn, val)?;
    let final_test_acc = acc_of(&gcn, test)?;
    let (val_acc, test_acc, best_gcn) = match best {
        Some((v, _, t, g)) if v >= final_val_acc => (v, t, g),
        _ => (final_val_acc, final_test_acc, gcn),
    };
    Ok((
        best_gcn,
        TicketAccuracy {
            val_acc,
            test_acc,
            final_val_acc,
            final_test_acc,
            epochs,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: usize,
    pub graph_sparsity: f64,
    pub model_sparsity: f64,
    /// Ticket accuracy (best-validation checkpoint) when retrained this
    /// round, otherwise the mask-training model's final-epoch accuracy.
    pub val_acc: f64,
    pub test_acc: f64,
    pub ticket: Option<TicketAccuracy>,
    /// Loss components at the last mask-training epoch.
    pub losses: LossBreakdown,
    /// Active adversarial edges after pruning.
    pub adv: EdgeCategoryCounts,
    pub epochs_trained: usize,
    pub pruned_graph: bool,
    pub pruned_model: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TicketReport {
    pub rows: Vec<RoundRow>,
    /// Adversarial edges before any pruning.
    pub initial_adv: EdgeCategoryCounts,
    pub n_edges: usize,
    pub n_weights: usize,
    pub pseudo_labels: usize,
    pub pseudo_label_accuracy: Option<f64>,
    pub config: ArgsConfig,
}

/// Hooks into the round loop, for instrumentation and tests.
pub trait ArgsObserver {
    /// Called after the rewind at the start of each round.
    fn round_start(&mut self, _round: usize, _gcn: &GcnState, _masks: &MaskPair) {}
    /// Called with the trained (real-valued) and the pruned masks.
    fn round_end(&mut self, _round: usize, _trained: &MaskPair, _pruned: &MaskPair) {}
}

impl ArgsObserver for () {}

#[derive(Debug, Clone)]
pub struct ArgsOutcome {
    pub masks: MaskPair,
    /// Network holding `Θ⁰` (weights rewound).
    pub gcn: GcnState,
    /// Best-validation weights of the last retrained ticket, if any.
    pub ticket_gcn: Option<GcnState>,
    pub report: TicketReport,
}

pub fn run_args(problem: &ArgsProblem, cfg: &ArgsConfig) -> Result<ArgsOutcome> {
    run_args_observed(problem, cfg, &mut ())
}

pub fn run_args_observed(problem: &ArgsProblem, cfg: &ArgsConfig, observer: &mut dyn ArgsObserver) -> Result<ArgsOutcome> {
    cfg.validate()?;
    let obj = &problem.objective;
    let mut gcn = GcnState::new(
        problem.num_features(),
        cfg.hidden,
        problem.num_classes(),
        rng::sub_seed(cfg.seed, "init"),
    );
    let mut masks = MaskPair::ones(problem.n_edges(), &gcn);
    let initial_adv = edge_category_counts(&problem.pg, &problem.split, &masks.edge)?;
    let (val, test) = (&problem.split.val, &problem.split.test);
    let mut rows = Vec::new();
    let mut ticket_gcn = None;

    loop {
        let g_open = masks.graph_sparsity() < cfg.s_g;
        let m_open = masks.model_sparsity() < cfg.s_theta;
        let go = match cfg.guard {
            LoopGuard::Both => g_open && m_open,
            LoopGuard::Either => g_open || m_open,
        };
        if !go || cfg.max_rounds.is_some_and(|m| rows.len() >= m) {
            break;
        }
        let round = rows.len() + 1;
        gcn.rewind();
        observer.round_start(round, &gcn, &masks);

        let (trained, losses, epochs_trained) = train_masks(problem, cfg, &mut gcn, &masks)?;
        let pruned = prune_selected(
            &trained,
            (g_open || cfg.guard == LoopGuard::Both).then_some(cfg.p_g),
            (m_open || cfg.guard == LoopGuard::Both).then_some(cfg.p_theta),
        );
        observer.round_end(round, &trained, &pruned);

        let (val_acc, test_acc, ticket) = if cfg.retrain.applies(round) {
            let (tg, acc) = retrain_ticket(problem, &pruned, &gcn, cfg)?;
            ticket_gcn = Some(tg);
            (acc.val_acc, acc.test_acc, Some(acc))
        } else {
            let cache = obj.forward(&gcn, &trained)?;
            let acc = |nodes: &[usize]| if nodes.is_empty() { Ok(0.0) } else { accuracy(&cache.z, &obj.labels, nodes) };
            (acc(val)?, acc(test)?, None)
        };
        let adv = edge_category_counts(&problem.pg, &problem.split, &pruned.edge)?;
        let row = RoundRow {
            round,
            graph_sparsity: pruned.graph_sparsity(),
            model_sparsity: pruned.model_sparsity(),
            val_acc,
            test_acc,
            ticket,
            losses,
            adv,
            epochs_trained,
            pruned_graph: pruned.graph_sparsity() > masks.graph_sparsity(),
            pruned_model: pruned.model_sparsity() > masks.model_sparsity(),
        };
        log::info!(
            "round {round}: graph {:.4} model {:.4} val {:.4} test {:.4}",
            row.graph_sparsity,
            row.model_sparsity,
            row.val_acc,
            row.test_acc
        );
        rows.push(row);
        masks = pruned;
    }
    gcn.rewind();
    let report = TicketReport {
        rows,
        initial_adv,
        n_edges: problem.n_edges(),
        n_weights: gcn.n_weights(),
        pseudo_labels: problem.pseudo.len(),
        pseudo_label_accuracy: problem.pseudo.accuracy(&obj.labels),
        config: cfg.clone(),
    };
    Ok(ArgsOutcome {
        masks,
        gcn,
        ticket_gcn,
        report,
    })
}

/// Live edge masks are held at or above this so degrees stay positive and
/// the entry still counts as unpruned.
pub const EDGE_MASK_FLOOR: f64 = 1e-6;

/// One round of joint training. Pruned entries (zero at round start) get no
/// updates. Returns the final-epoch masks, loss breakdown and epoch count.
fn train_masks(
    problem: &ArgsProblem,
    cfg: &ArgsConfig,
    gcn: &mut GcnState,
    start: &MaskPair,
) -> Result<(MaskPair, LossBreakdown, usize)> {
    let obj = &problem.objective;
    let val = &problem.split.val;
    let mut masks = start.clone();
    let live_e: Vec<bool> = start.edge.iter().map(|&v| v != 0.0).collect();
    let live_w0: Vec<bool> = start.weights.w0.as_slice().iter().map(|&v| v != 0.0).collect();
    let live_w1: Vec<bool> = start.weights.w1.as_slice().iter().map(|&v| v != 0.0).collect();
    let mut adam = AdamState::new(
        AdamConfig::default(),
        &[
            (cfg.lr_weights, gcn.w0.len()),
            (cfg.lr_weights, gcn.w1.len()),
            (cfg.lr_edge_mask, masks.edge.len()),
            (cfg.lr_weight_mask, masks.weights.w0.len()),
            (cfg.lr_weight_mask, masks.weights.w1.len()),
        ],
    );
    let mut best_val = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut last = LossBreakdown::default();
    let mut epochs = 0;
    for _ in 0..cfg.epochs {
        let (breakdown, mut g, cache) = obj.args(gcn, &masks, &cfg.weights)?;
        last = breakdown;
        let freeze = |grad: &mut [f64], live: &[bool]| {
            grad.iter_mut().zip(live).filter(|(_, &l)| !l).for_each(|(v, _)| *v = 0.0);
        };
        freeze(&mut g.edge, &live_e);
        freeze(g.mask_w0.as_mut_slice(), &live_w0);
        freeze(g.mask_w1.as_mut_slice(), &live_w1);
        adam.step(
            &mut [
                gcn.w0.as_mut_slice(),
                gcn.w1.as_mut_slice(),
                &mut masks.edge,
                masks.weights.w0.as_mut_slice(),
                masks.weights.w1.as_mut_slice(),
            ],
            &[
                g.w0.as_slice(),
                g.w1.as_slice(),
                &g.edge,
                g.mask_w0.as_slice(),
                g.mask_w1.as_slice(),
            ],
        );
        for (m, _) in masks.edge.iter_mut().zip(&live_e).filter(|(_, &l)| l) {
            *m = m.max(EDGE_MASK_FLOOR);
        }
        epochs += 1;
        if !val.is_empty() {
            let v = accuracy(&cache.z, &obj.labels, val)?;
            if v > best_val {
                best_val = v;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
    }
    Ok((masks, last, epochs))
}

/// On/off switches for the five loss coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub id: usize,
    pub alpha: bool,
    pub beta: bool,
    pub gamma: bool,
    pub eta: bool,
    pub zeta: bool,
}

impl AblationConfig {
    /// (1) all on, (2) β off, (3) γ off, (4) β and γ off.
    pub fn standard_grid() -> Vec<AblationConfig> {
        let on = AblationConfig {
            id: 1,
            alpha: true,
            beta: true,
            gamma: true,
            eta: true,
            zeta: true,
        };
        vec![
            on,
            AblationConfig { id: 2, beta: false, ..on },
            AblationConfig { id: 3, gamma: false, ..on },
            AblationConfig { id: 4, beta: false, gamma: false, ..on },
        ]
    }

    pub fn apply(&self, w: &LossWeights) -> LossWeights {
        let gate = |on: bool, v: f64| if on { v } else { 0.0 };
        LossWeights {
            alpha: gate(self.alpha, w.alpha),
            beta: gate(self.beta, w.beta),
            gamma: gate(self.gamma, w.gamma),
            eta: gate(self.eta, w.eta),
            zeta: gate(self.zeta, w.zeta),
            ..*w
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub round: usize,
    pub graph_sparsity: f64,
    pub model_sparsity: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: AblationConfig,
    pub cells: Vec<AblationCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub checkpoints: Vec<usize>,
    pub rows: Vec<AblationRow>,
}

/// Run every configuration to the last checkpoint round and retrain tickets
/// at each checkpoint. Configurations run in parallel when enabled.
pub fn run_ablation(
    problem: &ArgsProblem,
    base: &ArgsConfig,
    configs: &[AblationConfig],
    checkpoints: &[usize],
) -> Result<AblationTable> {
    let last = checkpoints.iter().copied().max().ok_or(Error::EmptyIndex("ablation checkpoints"))?;
    let rows = par::map_slice(par::default_exec(), configs, |c| -> Result<AblationRow> {
        let cfg = ArgsConfig {
            weights: c.apply(&base.weights),
            s_g: 0.9999,
            s_theta: 0.9999,
            guard: LoopGuard::Both,
            max_rounds: Some(last),
            retrain: RetrainPolicy::Rounds(checkpoints.to_vec()),
            ..base.clone()
        };
        let out = run_args(problem, &cfg)?;
        let cells = checkpoints
            .iter()
            .map(|&r| {
                let row = out.report.rows.get(r - 1).ok_or_else(|| {
                    Error::Config(format!("checkpoint round {r} not reached (sparsity targets met early)"))
                })?;
                Ok(AblationCell {
                    round: r,
                    graph_sparsity: row.graph_sparsity,
                    model_sparsity: row.model_sparsity,
                    test_acc: row.test_acc,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AblationRow { config: *c, cells })
    });
    Ok(AblationTable {
        checkpoints: checkpoints.to_vec(),
        rows: rows.into_iter().collect::<Result<Vec<_>>>()?,
    })
}
