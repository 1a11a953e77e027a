//! Acceptance checks, one line per criterion.
//!
//! Criteria that need the Cora dataset read it from `ARGLT_CORA_DIR`
//! (edges.txt, features.csv, labels.txt, optional split.json) and report
//! UNAVAILABLE when it is not set. `ARGLT_ACCEPTANCE_FULL=1` runs the Cora
//! criteria at H=512 instead of the H=64 variant. The process exits non-zero
//! on FAIL only when `ARGLT_ACCEPTANCE_STRICT=1`; unavailable criteria also
//! count as failures in strict mode.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use arglt::attacks::{dissimilar_edge_attack, AttackConfig};
use arglt::gcn::{GcnState, MaskPair};
use arglt::losses::LossWeights;
use arglt::pseudo::{select_pseudo_labels, train_mlp, MlpConfig};
use arglt::sparsifier::{prune_masks, run_args_observed, ArgsConfig, ArgsObserver, ArgsProblem, RetrainPolicy, TicketReport};
use arglt::rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Unavailable(String),
}

use Outcome::*;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_arglt")
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin()).args(args).env("RUST_LOG", "warn").output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn read_report(path: &Path) -> TicketReport {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn cora_dir() -> Option<PathBuf> {
    std::env::var_os("ARGLT_CORA_DIR").map(PathBuf::from)
}

fn cora_hidden() -> (usize, f64) {
    if std::env::var("ARGLT_ACCEPTANCE_FULL").is_ok_and(|v| v == "1") {
        (512, 0.78)
    } else {
        (64, 0.74)
    }
}

// 1 ------------------------------------------------------------------------

fn gradient_oracle() -> Outcome {
    const H: f64 = 1e-5;
    let w = LossWeights::default();
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let inst = common::random_instance(seed);
        let (_, g, _) = inst.obj.args(&inst.gcn, &inst.masks, &w).unwrap();
        let total = |gcn: &GcnState, m: &MaskPair| inst.obj.args(gcn, m, &w).unwrap().0.total;
        let mut probe = |which: usize, analytic: &[f64]| {
            for (k, &a) in analytic.iter().enumerate() {
                let eval = |d: f64| {
                    let (mut gcn, mut m) = (inst.gcn.clone(), inst.masks.clone());
                    match which {
                        0 => gcn.w0.as_mut_slice()[k] += d,
                        1 => gcn.w1.as_mut_slice()[k] += d,
                        2 => m.weights.w0.as_mut_slice()[k] += d,
                        3 => m.weights.w1.as_mut_slice()[k] += d,
                        _ => m.edge[k] += d,
                    }
                    total(&gcn, &m)
                };
                let n = (eval(H) - eval(-H)) / (2.0 * H);
                worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-8));
            }
        };
        probe(0, g.w0.as_slice());
        probe(1, g.w1.as_slice());
        probe(2, g.mask_w0.as_slice());
        probe(3, g.mask_w1.as_slice());
        probe(4, &g.edge);
    }
    check(worst <= 1e-4, format!("worst relative error {worst:.2e} over 50 instances"))
}

// 2 ------------------------------------------------------------------------

fn sparsity_schedule() -> Outcome {
    // Cora largest connected component, H=512
    let gcn = GcnState::new(1433, 512, 7, 0);
    let mut masks = MaskPair::ones(5069, &gcn);
    let paper = [(5, 0.226, 0.672), (18, 0.603, 0.982), (20, 0.642, 0.988)];
    // independent count recursion: n <- n - max(1, floor(p n))
    let (mut ne, mut nw) = (5069usize, gcn.n_weights());
    let step = |n: usize, p: f64| n - ((p * n as f64).floor() as usize).max(1);
    let mut ok = true;
    let mut detail = Vec::new();
    for round in 1..=20 {
        masks = prune_masks(&masks, 0.05, 0.2);
        ne = step(ne, 0.05);
        nw = step(nw, 0.2);
        let (gs, ms) = (masks.graph_sparsity(), masks.model_sparsity());
        ok &= (gs - (1.0 - ne as f64 / 5069.0)).abs() < 1e-12;
        ok &= (ms - (1.0 - nw as f64 / gcn.n_weights() as f64)).abs() < 1e-12;
        if let Some(&(_, pg, pm)) = paper.iter().find(|c| c.0 == round) {
            ok &= (gs - pg).abs() <= 0.002 && (ms - pm).abs() <= 0.002;
            detail.push(format!("r{round} {:.2}%/{:.2}%", gs * 100.0, ms * 100.0));
        }
    }
    check(ok, detail.join(", "))
}

// 3 ------------------------------------------------------------------------

#[derive(Default)]
struct Invariants {
    theta0: Option<GcnState>,
    rewound: bool,
    binary: bool,
    nested: bool,
    support: Option<usize>,
    rounds: usize,
}

impl ArgsObserver for Invariants {
    fn round_start(&mut self, _round: usize, gcn: &GcnState, _masks: &MaskPair) {
        let t0 = self.theta0.get_or_insert_with(|| gcn.clone());
        self.rewound &= gcn.w0 == t0.w0 && gcn.w1 == t0.w1;
    }

    fn round_end(&mut self, _round: usize, trained: &MaskPair, pruned: &MaskPair) {
        self.rounds += 1;
        let vals = || pruned.edge.iter().chain(pruned.weights.iter());
        self.binary &= vals().all(|&v| v == 0.0 || v == 1.0);
        self.nested &= trained.edge.iter().chain(trained.weights.iter()).zip(vals()).all(|(&a, &b)| a != 0.0 || b == 0.0);
        let support = vals().filter(|&&v| v != 0.0).count();
        self.nested &= self.support.is_none_or(|s| support < s);
        self.support = Some(support);
    }
}

fn sbm_problem(blocks: usize, per_block: usize, noise: f64, rate: f64, seed: u64) -> ArgsProblem {
    let (g, split) = common::sbm(blocks, per_block, 0.05, 0.002, 32, noise, rng::sub_seed(seed, "sbm"));
    let attack = AttackConfig { ptb_rate: rate, seed: rng::sub_seed(seed, "attack"), ..Default::default() };
    let pg = dissimilar_edge_attack(&g, &attack).unwrap();
    let mlp = train_mlp(pg.base(), &split, &MlpConfig { seed: rng::sub_seed(seed, "mlp"), ..Default::default() }).unwrap();
    let pl = select_pseudo_labels(&mlp, pg.base(), &split, 0.8).unwrap();
    ArgsProblem::new(pg, split, pl, false).unwrap()
}

fn rewind_invariants() -> Outcome {
    let p = sbm_problem(4, 50, 1.0, 0.1, 3);
    let cfg = ArgsConfig { max_rounds: Some(5), seed: 3, ..Default::default() };
    let mut inv = Invariants { rewound: true, binary: true, nested: true, ..Default::default() };
    let out = run_args_observed(&p, &cfg, &mut inv).unwrap();
    let t0 = inv.theta0.as_ref().unwrap();
    let final_rewound = out.gcn.w0 == t0.w0 && out.gcn.w1 == t0.w1;
    check(
        inv.rounds == 5 && inv.rewound && final_rewound && inv.binary && inv.nested,
        format!(
            "{} rounds, rewound {}, binary {}, support shrinking {}",
            inv.rounds,
            inv.rewound && final_rewound,
            inv.binary,
            inv.nested
        ),
    )
}

// 4, 5 ---------------------------------------------------------------------

fn cora_end_to_end() -> Outcome {
    let Some(dir) = cora_dir() else {
        return Unavailable("ARGLT_CORA_DIR not set".into());
    };
    let (hidden, min_acc) = cora_hidden();
    let out = tempfile::tempdir().unwrap();
    let h = hidden.to_string();
    let args = [
        "sparsify", "--dataset", dir.to_str().unwrap(), "--attack", "pgd", "--ptb", "0.05", "--hidden", &h,
        "--max-rounds", "5", "--out", out.path().to_str().unwrap(),
    ];
    if let Err(e) = run_cli(&args) {
        return Fail(format!("sparsify failed: {e}"));
    }
    let report = read_report(&out.path().join("report.json"));
    let last = report.rows.last().unwrap();
    check(
        last.test_acc >= min_acc,
        format!(
            "H={hidden}: test accuracy {:.4} at {:.1}%/{:.1}% (need >= {min_acc})",
            last.test_acc,
            last.graph_sparsity * 100.0,
            last.model_sparsity * 100.0
        ),
    )
}

fn ablation_ordering() -> Outcome {
    let Some(dir) = cora_dir() else {
        return Unavailable("ARGLT_CORA_DIR not set".into());
    };
    let (hidden, _) = cora_hidden();
    let out = tempfile::tempdir().unwrap();
    let h = hidden.to_string();
    let args = [
        "ablate", "--dataset", dir.to_str().unwrap(), "--attack", "pgd", "--ptb", "0.05", "--hidden", &h,
        "--checkpoints", "18", "--out", out.path().to_str().unwrap(),
    ];
    if let Err(e) = run_cli(&args) {
        return Fail(format!("ablate failed: {e}"));
    }
    let csv = std::fs::read_to_string(out.path().join("ablation.csv")).unwrap();
    let acc = |config: &str| -> f64 {
        csv.lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .find(|f| f[0] == config)
            .map(|f| f[9].parse().unwrap())
            .unwrap()
    };
    let (a1, a4) = (acc("1"), acc("4"));
    check(a1 - a4 >= 0.02, format!("H={hidden}: config 1 {a1:.4} vs config 4 {a4:.4}"))
}

// 6 ------------------------------------------------------------------------

fn adversarial_removal() -> Outcome {
    let out = tempfile::tempdir().unwrap();
    let (dataset, attack, ptb, tt_min, trte_min) = match cora_dir() {
        Some(d) => (vec!["--dataset".to_string(), d.display().to_string()], "pgd", "0.2", 0.5, 0.3),
        None => (vec!["--sbm".into(), "5,100,0.05,0.002,32,1.0".into()], "dissimilar", "0.2", 0.4, 0.2),
    };
    let mut args: Vec<&str> = vec!["sparsify"];
    args.extend(dataset.iter().map(String::as_str));
    args.extend([
        "--attack", attack, "--ptb", ptb, "--pg", "0.05", "--sg", "0.99", "--stheta", "0.99", "--max-rounds", "20",
        "--retrain", "never", "--out", out.path().to_str().unwrap(),
    ]);
    if let Err(e) = run_cli(&args) {
        return Fail(format!("sparsify failed: {e}"));
    }
    let report = read_report(&out.path().join("report.json"));
    let (i, f) = (report.initial_adv, report.rows.last().unwrap().adv);
    let red = |a: usize, b: usize| if a == 0 { 0.0 } else { 1.0 - b as f64 / a as f64 };
    let (tt, trte, tete) = (red(i.train_train, f.train_train), red(i.train_test, f.train_test), red(i.test_test, f.test_test));
    let source = if cora_dir().is_some() { "Cora" } else { "500-node SBM" };
    check(
        report.rows.len() == 20 && tt >= tt_min && trte >= trte_min && tt > trte && trte > tete,
        format!(
            "{source}: reductions tt {:.1}% ({}->{}), tr-te {:.1}% ({}->{}), te-te {:.1}% ({}->{})",
            tt * 100.0,
            i.train_train,
            f.train_train,
            trte * 100.0,
            i.train_test,
            f.train_test,
            tete * 100.0,
            i.test_test,
            f.test_test
        ),
    )
}

// 7 ------------------------------------------------------------------------

#[derive(Default)]
struct FirstRound(Option<MaskPair>);

impl ArgsObserver for FirstRound {
    fn round_end(&mut self, round: usize, trained: &MaskPair, _pruned: &MaskPair) {
        if round == 1 {
            self.0 = Some(trained.clone());
        }
    }
}

fn smoothness_separation() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for seed in 0..5 {
        let p = sbm_problem(5, 100, 1.0, 0.2, 100 + seed);
        let cfg = ArgsConfig { max_rounds: Some(1), retrain: RetrainPolicy::Never, seed, ..Default::default() };
        let mut rec = FirstRound::default();
        run_args_observed(&p, &cfg, &mut rec).unwrap();
        let m = rec.0.unwrap();
        let mean = |adv: bool| {
            let v: Vec<f64> = p.edges().iter().zip(&m.edge).filter(|(e, _)| p.pg.is_adversarial(e) == adv).map(|(_, &x)| x).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (a, c) = (mean(true), mean(false));
        ok &= a < c;
        detail.push(format!("{a:.4}<{c:.4}"));
    }
    check(ok, format!("adversarial vs clean mean mask: {}", detail.join(" ")))
}

// 8 ------------------------------------------------------------------------

fn pseudo_labels() -> Outcome {
    let (g, split) = common::sbm(3, 60, 0.1, 0.01, 16, 1.0, 8);
    let mlp = train_mlp(&g, &split, &MlpConfig::default()).unwrap();
    let at = |tau| -> BTreeSet<usize> { select_pseudo_labels(&mlp, &g, &split, tau).unwrap().nodes().collect() };
    let (hi, mid, lo) = (at(0.95), at(0.8), at(0.5));
    let nested = hi.is_subset(&mid) && mid.is_subset(&lo);
    let labelled: BTreeSet<usize> = split.train.iter().chain(&split.val).copied().collect();
    let disjoint = lo.is_disjoint(&labelled);
    let (g0, split0) = common::sbm(3, 60, 0.1, 0.01, 16, 0.0, 9);
    let mlp0 = train_mlp(&g0, &split0, &MlpConfig::default()).unwrap();
    let pl0 = select_pseudo_labels(&mlp0, &g0, &split0, 0.8).unwrap();
    let acc0 = pl0.accuracy(g0.labels());
    check(
        nested && disjoint && acc0 == Some(1.0),
        format!(
            "|0.95|={} |0.8|={} |0.5|={}, nested {nested}, disjoint from train/val {disjoint}, sigma=0 accuracy {:?} ({} labels)",
            hi.len(),
            mid.len(),
            lo.len(),
            acc0,
            pl0.len()
        ),
    )
}

// 9 ------------------------------------------------------------------------

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let args = [
            "sparsify", "--sbm", "3,60,0.1,0.01,16,1.0", "--attack", "pgd", "--ptb", "0.1", "--epochs", "60", "--hidden",
            "32", "--sg", "0.15", "--seed", "7", "--out", d.path().to_str().unwrap(),
        ];
        if let Err(e) = run_cli(&args) {
            return Fail(format!("sparsify failed: {e}"));
        }
    }
    let same = |f: &str| std::fs::read(dirs[0].path().join(f)).unwrap() == std::fs::read(dirs[1].path().join(f)).unwrap();
    let (m, t) = (same("metrics.csv"), same("ticket.json"));
    check(m && t, format!("metrics.csv identical {m}, ticket.json identical {t}"))
}

fn main() {
    let criteria: [(usize, fn() -> Outcome); 9] = [
        (1, gradient_oracle),
        (2, sparsity_schedule),
        (3, rewind_invariants),
        (4, cora_end_to_end),
        (5, ablation_ordering),
        (6, adversarial_removal),
        (7, smoothness_separation),
        (8, pseudo_labels),
        (9, determinism),
    ];
    let strict = std::env::var("ARGLT_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let (mut pass, mut fail, mut unavailable) = (0, 0, 0);
    for (n, f) in criteria {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Pass(d) => {
                pass += 1;
                println!("criterion {n}: PASS ({d}) [{secs:.1}s]");
            }
            Fail(d) => {
                fail += 1;
                println!("criterion {n}: FAIL ({d}) [{secs:.1}s]");
            }
            Unavailable(d) => {
                unavailable += 1;
                println!("criterion {n}: UNAVAILABLE (not run: {d})");
            }
        }
    }
    println!("acceptance: {pass} pass, {fail} fail, {unavailable} unavailable");
    if strict && fail + unavailable > 0 {
        std::process::exit(1);
    }
}
