//! Subcommand implementations. Each seed writes into its own directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use arglt::attacks::{
    dissimilar_edge_attack, edge_category_counts, feature_diff_histogram, pgd_structure_attack, random_flip_attack,
    AttackFile, PerturbedGraph,
};
use arglt::checkpoint::{Checkpoint, TicketFile};
use arglt::graph::{generate_sbm, largest_connected_component, load_graph, make_split, Graph, NodeSplit};
use arglt::pseudo::{select_pseudo_labels, train_mlp, PseudoLabels};
use arglt::sparsifier::{run_ablation, run_args, AblationConfig, AblationTable, ArgsConfig, ArgsProblem, TicketReport};
use arglt::{par, report, rng};
use serde::Serialize;

use crate::config::{parse_sbm, AttackKind, ExperimentConfig};

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write(path, &s)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `out` for a single seed, `out/seed_<s>` otherwise.
fn seed_dir(out: &Path, cfg: &ExperimentConfig, seed: u64) -> Result<PathBuf> {
    let dir = if cfg.seeds.len() == 1 {
        out.to_path_buf()
    } else {
        out.join(format!("seed_{seed}"))
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    if cfg.seeds.len() > 1 {
        write_json(&dir.join("config.json"), &seeded(cfg, seed))?;
    }
    Ok(dir)
}

fn for_each_seed<T: Send>(cfg: &ExperimentConfig, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<(u64, T)>> {
    par::map_slice(par::default_exec(), &cfg.seeds, |&s| f(s).map(|t| (s, t)).with_context(|| format!("seed {s}")))
        .into_iter()
        .collect()
}

/// Resolved configuration for one seed, with every component seed derived from it.
fn seeded(cfg: &ExperimentConfig, seed: u64) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.seeds = vec![seed];
    c.attack_config.seed = rng::sub_seed(seed, "attack");
    c.args.seed = rng::sub_seed(seed, "args");
    c.args.mlp.seed = rng::sub_seed(seed, "mlp");
    c
}

/// Clean graph and split. Datasets are reduced to their largest connected
/// component; split.json is remapped accordingly.
fn load_data(cfg: &ExperimentConfig, seed: u64) -> Result<(Graph, NodeSplit)> {
    let fractions = (cfg.split[0], cfg.split[1], cfg.split[2]);
    if let Some(spec) = &cfg.sbm {
        let g = generate_sbm(&parse_sbm(spec, rng::sub_seed(seed, "sbm"))?)?;
        let split = make_split(g.n_nodes(), fractions, rng::sub_seed(seed, "split"))?;
        return Ok((g, split));
    }
    let dir = cfg.dataset.as_ref().context("no dataset given")?;
    let full = load_graph(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    let (g, map) = largest_connected_component(&full);
    if g.n_nodes() < full.n_nodes() {
        log::info!("kept largest connected component: {} of {} nodes", g.n_nodes(), full.n_nodes());
    }
    let split_path = dir.join("split.json");
    let split = if split_path.exists() {
        NodeSplit::load(&split_path, full.n_nodes())?.remap(&map, g.n_nodes())?
    } else {
        make_split(g.n_nodes(), fractions, rng::sub_seed(seed, "split"))?
    };
    Ok((g, split))
}

/// Poisoned graph; `None` for the attack file means no attack was applied.
fn perturb(cfg: &ExperimentConfig, g: Graph, split: &NodeSplit) -> Result<(PerturbedGraph, Option<AttackFile>)> {
    if let Some(path) = &cfg.attack_file {
        let f = AttackFile::load(path)?;
        let pg = f.apply(g).with_context(|| format!("applying {}", path.display()))?;
        return Ok((pg, Some(f)));
    }
    let ac = &cfg.attack_config;
    if cfg.attack == AttackKind::None {
        return Ok((PerturbedGraph::clean(g), None));
    }
    if ac.ptb_rate == 0.0 {
        log::warn!("perturbation rate 0: the attack flips no edges");
    }
    let pg = match cfg.attack {
        AttackKind::Pgd => pgd_structure_attack(&g, split, ac)?,
        AttackKind::Random => random_flip_attack(&g, ac)?,
        AttackKind::Dissimilar => dissimilar_edge_attack(&g, ac)?,
        AttackKind::None => unreachable!(),
    };
    log::info!("{} attack: {} added, {} removed", cfg.attack.name(), pg.added().len(), pg.removed().len());
    let f = AttackFile::from_perturbed(&pg, cfg.attack.name(), ac.ptb_rate, ac.seed);
    Ok((pg, Some(f)))
}

fn attack_outputs(cfg: &ExperimentConfig, dir: &Path, pg: &PerturbedGraph, split: &NodeSplit, f: &AttackFile) -> Result<()> {
    write(&dir.join("attack.json"), &(f.to_json() + "\n"))?;
    let hist = feature_diff_histogram(pg, cfg.histogram_bins, cfg.args.normalize_features);
    let counts = edge_category_counts(pg, split, &vec![1.0; pg.edges().len()])?;
    write(&dir.join("attack_stats.csv"), &report::attack_stats_csv(&hist, &counts))
}

pub fn attack(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), cfg)?;
    for_each_seed(cfg, |seed| {
        let c = seeded(cfg, seed);
        let dir = seed_dir(out, cfg, seed)?;
        let (g, split) = load_data(&c, seed)?;
        let c = ExperimentConfig {
            attack: if c.attack == AttackKind::None { AttackKind::Pgd } else { c.attack },
            ..c
        };
        let (pg, f) = perturb(&c, g, &split)?;
        attack_outputs(&c, &dir, &pg, &split, f.as_ref().expect("attack ran"))
    })?;
    Ok(())
}

fn pseudo_labels(c: &ExperimentConfig, g: &Graph, split: &NodeSplit, dir: &Path) -> Result<PseudoLabels> {
    let mlp = train_mlp(g, split, &c.args.mlp)?;
    let pl = select_pseudo_labels(&mlp, g, split, c.args.tau)?;
    if let Some(acc) = pl.accuracy(g.labels()) {
        log::info!("{} pseudo labels at tau={} (accuracy {:.4})", pl.len(), c.args.tau, acc);
    }
    pl.save(&dir.join("pseudo_labels.json"))?;
    Ok(pl)
}

fn problem(c: &ExperimentConfig, dir: &Path) -> Result<ArgsProblem> {
    let (g, split) = load_data(c, c.seeds[0])?;
    let (pg, f) = perturb(c, g, &split)?;
    if let Some(f) = &f {
        attack_outputs(c, dir, &pg, &split, f)?;
    }
    let pl = pseudo_labels(c, pg.base(), &split, dir)?;
    Ok(ArgsProblem::new(pg, split, pl, c.args.normalize_features)?)
}

pub fn sparsify(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), cfg)?;
    let reports = for_each_seed(cfg, |seed| {
        let c = seeded(cfg, seed);
        let dir = seed_dir(out, cfg, seed)?;
        let p = problem(&c, &dir)?;
        let outcome = run_args(&p, &c.args)?;
        write(&dir.join("metrics.csv"), &report::metrics_csv(&outcome.report))?;
        write_json(&dir.join("report.json"), &outcome.report)?;
        Checkpoint::from_gcn(&outcome.gcn).save(&dir.join("theta0.json"))?;
        if let Some(t) = &outcome.ticket_gcn {
            Checkpoint::from_gcn(t).save(&dir.join("ticket_model.json"))?;
        }
        let ticket = TicketFile::new(
            p.edges(),
            &outcome.masks,
            "theta0.json",
            serde_json::to_value(&c.args)?,
            "report.json",
        )?;
        ticket.save(&dir.join("ticket.json"))?;
        Ok(outcome.report)
    })?;
    write_summary(&reports, out)
}

fn write_summary(reports: &[(u64, TicketReport)], out: &Path) -> Result<()> {
    let s = report::summarize(reports);
    write_json(&out.join("summary.json"), &s)?;
    write(&out.join("accuracy_sparsity.csv"), &report::accuracy_sparsity_csv(&s))?;
    write(&out.join("adversarial_edges.csv"), &report::adversarial_edges_csv(&s))
}

pub fn ablate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), cfg)?;
    let tables = for_each_seed(cfg, |seed| {
        let c = seeded(cfg, seed);
        let dir = seed_dir(out, cfg, seed)?;
        let p = problem(&c, &dir)?;
        let t = run_ablation(&p, &c.args, &AblationConfig::standard_grid(), &c.checkpoints)?;
        write_json(&dir.join("ablation.json"), &t)?;
        Ok(t)
    })?;
    write(&out.join("ablation.csv"), &report::ablation_csv(&tables))
}

/// `dir` itself if it holds `file`, plus any immediate subdirectories that do.
fn find_runs(dir: &Path, file: &str) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    if dir.join(file).is_file() {
        found.push(dir.join(file));
    }
    let mut subs: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join(file).is_file())
        .collect();
    subs.sort();
    found.extend(subs.into_iter().map(|p| p.join(file)));
    Ok(found)
}

/// Experiment seed of the run that wrote `file`, from the config.json beside it.
fn run_seed(file: &Path) -> Result<u64> {
    let cfg: ExperimentConfig = read_json(&file.with_file_name("config.json"))?;
    match cfg.seeds[..] {
        [s] => Ok(s),
        _ => bail!("{} does not belong to a single-seed run", file.display()),
    }
}

/// Configuration with the per-seed fields cleared, for schema comparison.
fn unseeded(c: &ArgsConfig) -> ArgsConfig {
    let mut c = c.clone();
    c.seed = 0;
    c.mlp.seed = 0;
    c
}

pub fn report(runs: &[PathBuf], out: &Path) -> Result<()> {
    let runs: Vec<PathBuf> = if runs.is_empty() { vec![out.to_path_buf()] } else { runs.to_vec() };
    let mut reports: Vec<(u64, TicketReport)> = Vec::new();
    let mut tables: Vec<(u64, AblationTable)> = Vec::new();
    for dir in &runs {
        for path in find_runs(dir, "report.json")? {
            reports.push((run_seed(&path)?, read_json(&path)?));
        }
        for path in find_runs(dir, "ablation.json")? {
            tables.push((run_seed(&path)?, read_json(&path)?));
        }
    }
    reports.sort_by_key(|(s, _)| *s);
    tables.sort_by_key(|(s, _)| *s);
    if reports.is_empty() && tables.is_empty() {
        bail!("no report.json or ablation.json found under {runs:?}");
    }
    if let Some((_, first)) = reports.first() {
        let want = unseeded(&first.config);
        if let Some((s, _)) = reports.iter().find(|(_, r)| unseeded(&r.config) != want) {
            bail!("run with seed {s} was produced by a different configuration");
        }
    }
    if let Some((_, first)) = tables.first() {
        if tables.iter().any(|(_, t)| t.checkpoints != first.checkpoints) {
            bail!("ablation runs use different checkpoint rounds");
        }
    }
    fs::create_dir_all(out)?;
    if !reports.is_empty() {
        write_summary(&reports, out)?;
    }
    if !tables.is_empty() {
        write(&out.join("ablation.csv"), &report::ablation_csv(&tables))?;
    }
    Ok(())
}

pub fn gen_sbm(spec: &str, seed: u64, split: &[f64], out: &Path) -> Result<()> {
    let [a, b, c] = split else {
        bail!("--split expects three fractions");
    };
    let g = generate_sbm(&parse_sbm(spec, seed)?)?;
    g.save(out)?;
    let s = make_split(g.n_nodes(), (*a, *b, *c), rng::sub_seed(seed, "split"))?;
    s.save(&out.join("split.json"))?;
    log::info!("wrote {} nodes, {} edges to {}", g.n_nodes(), g.n_edges(), out.display());
    Ok(())
}
