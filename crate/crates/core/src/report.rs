//! CSV and JSON reporting, and aggregation over seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::attacks::{EdgeCategoryCounts, FeatureDiffHistogram};
use crate::sparsifier::{AblationTable, TicketReport};

/// Format with 6 significant digits, `%g` style: trailing zeros dropped,
/// scientific notation below `1e-4` or from `1e6` up.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (5 - exp) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const METRICS_HEADER: &str =
    "round,graph_sparsity,model_sparsity,val_acc,test_acc,l0,lfs,l1,reg_g,reg_theta,adv_tt,adv_trte,adv_tete";

/// One row per completed round.
pub fn metrics_csv(report: &TicketReport) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in &report.rows {
        let l = &r.losses;
        let floats = [
            r.graph_sparsity,
            r.model_sparsity,
            r.val_acc,
            r.test_acc,
            l.l0,
            l.lfs,
            l.l1,
            l.reg_g,
            l.reg_theta,
        ];
        let _ = write!(out, "{}", r.round);
        for v in floats {
            let _ = write!(out, ",{}", fmt_sig(v));
        }
        let _ = writeln!(out, ",{},{},{}", r.adv.train_train, r.adv.train_test, r.adv.test_test);
    }
    out
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Self { mean, std: var.sqrt(), n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub graph_sparsity: MeanStd,
    pub model_sparsity: MeanStd,
    pub val_acc: MeanStd,
    pub test_acc: MeanStd,
    pub adv_tt: MeanStd,
    pub adv_trte: MeanStd,
    pub adv_tete: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seeds: Vec<u64>,
    /// Round 0 holds the unpruned graph's adversarial edge counts.
    pub rounds: Vec<RoundSummary>,
    /// Test accuracy of each seed's last round.
    pub final_test_acc: MeanStd,
    pub pseudo_labels: MeanStd,
    pub pseudo_label_accuracy: Option<MeanStd>,
}

/// Aggregate per-seed reports round by round. Rounds missing for some seeds
/// are averaged over the seeds that reached them.
pub fn summarize(reports: &[(u64, TicketReport)]) -> Summary {
    let mut by_round: BTreeMap<usize, Vec<[f64; 7]>> = BTreeMap::new();
    for (_, rep) in reports {
        let a = rep.initial_adv;
        by_round.entry(0).or_default().push([
            0.0,
            0.0,
            f64::NAN,
            f64::NAN,
            a.train_train as f64,
            a.train_test as f64,
            a.test_test as f64,
        ]);
        for r in &rep.rows {
            by_round.entry(r.round).or_default().push([
                r.graph_sparsity,
                r.model_sparsity,
                r.val_acc,
                r.test_acc,
                r.adv.train_train as f64,
                r.adv.train_test as f64,
                r.adv.test_test as f64,
            ]);
        }
    }
    let rounds = by_round
        .into_iter()
        .map(|(round, vals)| {
            let col = |k: usize| MeanStd::of(&vals.iter().map(|v| v[k]).filter(|x| !x.is_nan()).collect::<Vec<_>>());
            RoundSummary {
                round,
                graph_sparsity: col(0),
                model_sparsity: col(1),
                val_acc: col(2),
                test_acc: col(3),
                adv_tt: col(4),
                adv_trte: col(5),
                adv_tete: col(6),
            }
        })
        .collect();
    let finals: Vec<f64> = reports.iter().filter_map(|(_, r)| r.rows.last().map(|x| x.test_acc)).collect();
    let pl: Vec<f64> = reports.iter().map(|(_, r)| r.pseudo_labels as f64).collect();
    let pla: Vec<f64> = reports.iter().filter_map(|(_, r)| r.pseudo_label_accuracy).collect();
    Summary {
        seeds: reports.iter().map(|(s, _)| *s).collect(),
        rounds,
        final_test_acc: MeanStd::of(&finals),
        pseudo_labels: MeanStd::of(&pl),
        pseudo_label_accuracy: (!pla.is_empty()).then(|| MeanStd::of(&pla)),
    }
}

/// Test accuracy against both sparsities, one row per round (excluding round 0).
pub fn accuracy_sparsity_csv(s: &Summary) -> String {
    let mut out = String::from("round,graph_sparsity,model_sparsity,test_acc_mean,test_acc_std,n_seeds\n");
    for r in s.rounds.iter().filter(|r| r.round > 0) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.round,
            fmt_sig(r.graph_sparsity.mean),
            fmt_sig(r.model_sparsity.mean),
            fmt_sig(r.test_acc.mean),
            fmt_sig(r.test_acc.std),
            r.test_acc.n
        );
    }
    out
}

/// Remaining adversarial edges per category, by round (round 0 is before pruning).
pub fn adversarial_edges_csv(s: &Summary) -> String {
    let mut out = String::from("round,graph_sparsity,adv_tt,adv_trte,adv_tete,adv_total\n");
    for r in &s.rounds {
        let total = r.adv_tt.mean + r.adv_trte.mean + r.adv_tete.mean;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.round,
            fmt_sig(r.graph_sparsity.mean),
            fmt_sig(r.adv_tt.mean),
            fmt_sig(r.adv_trte.mean),
            fmt_sig(r.adv_tete.mean),
            fmt_sig(total)
        );
    }
    out
}

/// Long-form ablation table: one row per configuration and checkpoint,
/// aggregated over seeds.
pub fn ablation_csv(tables: &[(u64, AblationTable)]) -> String {
    type Cell = (crate::sparsifier::AblationConfig, Vec<[f64; 3]>);
    let mut cells: BTreeMap<(usize, usize), Cell> = BTreeMap::new();
    for (_, t) in tables {
        for row in &t.rows {
            for c in &row.cells {
                cells
                    .entry((row.config.id, c.round))
                    .or_insert_with(|| (row.config, Vec::new()))
                    .1
                    .push([c.graph_sparsity, c.model_sparsity, c.test_acc]);
            }
        }
    }
    let mut out = String::from(
        "config,alpha,beta,gamma,eta,zeta,round,graph_sparsity,model_sparsity,test_acc_mean,test_acc_std,n_seeds\n",
    );
    for ((id, round), (cfg, vals)) in cells {
        let col = |k: usize| MeanStd::of(&vals.iter().map(|v| v[k]).collect::<Vec<_>>());
        let acc = col(2);
        let b = |on: bool| u8::from(on);
        let _ = writeln!(
            out,
            "{id},{},{},{},{},{},{round},{},{},{},{},{}",
            b(cfg.alpha),
            b(cfg.beta),
            b(cfg.gamma),
            b(cfg.eta),
            b(cfg.zeta),
            fmt_sig(col(0).mean),
            fmt_sig(col(1).mean),
            fmt_sig(acc.mean),
            fmt_sig(acc.std),
            acc.n
        );
    }
    out
}

/// Feature-difference histogram rows followed by adversarial edge counts by
/// endpoint category. Histogram rows carry the probability mass of each bin.
pub fn attack_stats_csv(h: &FeatureDiffHistogram, counts: &EdgeCategoryCounts) -> String {
    let mut out = String::from("kind,label,bin_lo,bin_hi,clean,adversarial\n");
    for (k, w) in h.bin_edges.windows(2).enumerate() {
        let _ = writeln!(
            out,
            "histogram,{k},{},{},{},{}",
            fmt_sig(w[0]),
            fmt_sig(w[1]),
            fmt_sig(h.clean[k]),
            fmt_sig(h.adversarial[k])
        );
    }
    let _ = writeln!(
        out,
        "mean_sq_diff,all,,,{},{}",
        fmt_sig(h.mean_clean),
        fmt_sig(h.mean_adversarial)
    );
    for (label, c) in [
        ("train_train", counts.train_train),
        ("train_test", counts.train_test),
        ("test_test", counts.test_test),
    ] {
        let _ = writeln!(out, "category,{label},,,,{c}");
    }
    out
}
