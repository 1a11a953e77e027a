mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use arglt::adjacency::{normalized_adjacency, EdgeIndex};
use arglt::attacks::{dissimilar_edge_attack, flip_budget, project_budget, random_flip_attack, AttackConfig};
use arglt::checkpoint::{rle_decode, rle_encode};
use arglt::dense::{self, Matrix};
use arglt::graph::{largest_connected_component, make_split, Graph};
use arglt::pseudo::{select_pseudo_labels, train_mlp, MlpConfig};
use arglt::report::fmt_sig;
use arglt::sparsifier::prune_values;
use proptest::prelude::*;

fn edge_list(n: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0..n, 0..n), 0..3 * n).prop_map(|v| {
        let set: BTreeSet<(usize, usize)> = v.into_iter().filter(|(a, b)| a != b).map(|(a, b)| (a.min(b), a.max(b))).collect();
        set.into_iter().collect()
    })
}

fn graph_strategy() -> impl Strategy<Value = Graph> {
    (3usize..25, 1usize..5).prop_flat_map(|(n, f)| {
        (
            edge_list(n),
            prop::collection::vec(-2.0f64..2.0, n * f),
            prop::collection::vec(0usize..3, n),
        )
            .prop_map(move |(edges, x, labels)| Graph::new(edges, Matrix::from_vec(n, f, x).unwrap(), labels, 3).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn prune_binarizes_and_never_resurrects(
        values in prop::collection::vec(prop_oneof![Just(0.0), -2.0f64..2.0], 1..200),
        rate in 0.01f64..0.99,
    ) {
        let before = values.clone();
        let nnz = before.iter().filter(|v| **v != 0.0).count();
        let mut v = values;
        let pruned = prune_values(&mut v, rate);
        prop_assert!(v.iter().all(|&x| x == 0.0 || x == 1.0));
        for (a, b) in before.iter().zip(&v) {
            if *a == 0.0 {
                prop_assert_eq!(*b, 0.0);
            }
        }
        let expected = if nnz == 0 { 0 } else { ((rate * nnz as f64 + 1e-9).floor() as usize).max(1) };
        prop_assert_eq!(pruned, expected);
        // every pruned entry is no larger in magnitude than every survivor
        let max_pruned = before.iter().zip(&v).filter(|(a, b)| **a != 0.0 && **b == 0.0).map(|(a, _)| a.abs()).fold(0.0, f64::max);
        let min_kept = before.iter().zip(&v).filter(|(_, b)| **b == 1.0).map(|(a, _)| a.abs()).fold(f64::INFINITY, f64::min);
        prop_assert!(max_pruned <= min_kept);
    }

    #[test]
    fn sparsity_strictly_increases_under_repeated_pruning(n in 1usize..3000, rate in 0.01f64..0.5, rounds in 1usize..30) {
        let mut v = vec![0.5; n];
        let mut last_nnz = n;
        for _ in 0..rounds {
            if last_nnz == 0 {
                break;
            }
            prune_values(&mut v, rate);
            let nnz = v.iter().filter(|x| **x != 0.0).count();
            prop_assert!(nnz < last_nnz);
            last_nnz = nnz;
        }
    }

    #[test]
    fn budget_projection_is_feasible_and_idempotent(
        s in prop::collection::vec(-3.0f64..3.0, 1..60),
        budget in 0.0f64..20.0,
    ) {
        let mut p = s.clone();
        let iters = project_budget(&mut p, budget);
        prop_assert!(iters <= 64);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(p.iter().sum::<f64>() <= budget + 1e-9);
        let mut q = p.clone();
        project_budget(&mut q, budget);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn normalized_adjacency_matches_dense_formula(g in graph_strategy(), mask_seed in any::<u64>()) {
        let n = g.n_nodes();
        let index = Arc::new(EdgeIndex::new(n, g.edges().to_vec()).unwrap());
        let mut r = arglt::rng::rng(mask_seed);
        let mask: Vec<f64> = (0..g.n_edges()).map(|_| rand::Rng::random_range(&mut r, 0.0..=1.0)).collect();
        let got = normalized_adjacency(&index, &mask).unwrap().to_dense();
        // dense oracle: D^-1/2 (M⊙A + I) D^-1/2
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            a.set(i, i, 1.0);
        }
        for (k, &(i, j)) in g.edges().iter().enumerate() {
            a.set(i, j, mask[k]);
            a.set(j, i, mask[k]);
        }
        let d: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
        for i in 0..n {
            for j in 0..n {
                let want = a.get(i, j) / (d[i] * d[j]).sqrt();
                prop_assert!((got.get(i, j) - want).abs() < 1e-12);
                prop_assert_eq!(got.get(i, j), got.get(j, i));
            }
        }
    }

    #[test]
    fn random_attack_respects_budget(g in graph_strategy(), rate in 0.0f64..0.6, seed in any::<u64>()) {
        let cfg = AttackConfig { ptb_rate: rate, seed, ..Default::default() };
        let pg = random_flip_attack(&g, &cfg).unwrap();
        prop_assert!(pg.within_budget(rate));
        let budget = flip_budget(rate, g.n_edges());
        let pairs = g.n_nodes() * (g.n_nodes() - 1) / 2;
        prop_assert_eq!(pg.budget_used(), budget.min(pairs));
        for e in pg.added() {
            prop_assert!(!g.has_edge(e.0, e.1));
        }
        for e in pg.removed() {
            prop_assert!(g.has_edge(e.0, e.1));
        }
        prop_assert_eq!(pg.edges().len(), g.n_edges() + pg.added().len() - pg.removed().len());
    }

    #[test]
    fn dissimilar_attack_adds_the_most_distant_non_edges(g in graph_strategy(), rate in 0.0f64..0.6) {
        let pg = dissimilar_edge_attack(&g, &AttackConfig { ptb_rate: rate, ..Default::default() }).unwrap();
        prop_assert!(pg.removed().is_empty());
        let x = g.features();
        let dist = |a: usize, b: usize| dense::squared_distance(x.row(a), x.row(b));
        let min_added = pg.added().iter().map(|&(a, b)| dist(a, b)).fold(f64::INFINITY, f64::min);
        for i in 0..g.n_nodes() {
            for j in i + 1..g.n_nodes() {
                if !g.has_edge(i, j) && !pg.added().contains(&(i, j)) {
                    prop_assert!(dist(i, j) <= min_added);
                }
            }
        }
    }

    #[test]
    fn lcc_is_connected_and_map_is_consistent(g in graph_strategy()) {
        let (lcc, map) = largest_connected_component(&g);
        prop_assert_eq!(map.len(), g.n_nodes());
        prop_assert_eq!(map.iter().flatten().count(), lcc.n_nodes());
        // BFS from node 0 reaches everything
        let mut seen = vec![false; lcc.n_nodes()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(a, b) in lcc.edges() {
                let v = if a == u { b } else if b == u { a } else { continue };
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        for (old, new) in map.iter().enumerate() {
            if let Some(new) = new {
                prop_assert_eq!(g.labels()[old], lcc.labels()[*new]);
            }
        }
    }

    #[test]
    fn splits_are_disjoint_and_sized(n in 10usize..400, seed in any::<u64>()) {
        let s = make_split(n, (0.1, 0.1, 0.8), seed).unwrap();
        let all: BTreeSet<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(s.train.len(), n / 10);
    }

    #[test]
    fn rle_roundtrip(bits in prop::collection::vec(any::<bool>(), 0..500)) {
        prop_assert_eq!(rle_decode(&rle_encode(bits.iter().copied())).unwrap(), bits);
    }

    #[test]
    fn six_significant_digits_roundtrip(v in prop_oneof![-1e9f64..1e9, -1e-3f64..1e-3]) {
        let s = fmt_sig(v);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - v).abs() <= 5e-6 * v.abs(), "{} -> {}", v, s);
        let digits = s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).collect::<String>();
        prop_assert!(digits.trim_start_matches('0').len() <= 6);
    }
}

#[test]
fn pseudo_labels_nested_in_threshold_and_test_only() {
    let (g, split) = common::sbm(3, 30, 0.2, 0.02, 9, 0.6, 11);
    let mlp = train_mlp(&g, &split, &MlpConfig { hidden: Some(16), ..Default::default() }).unwrap();
    let at = |tau| -> BTreeSet<usize> { select_pseudo_labels(&mlp, &g, &split, tau).unwrap().nodes().collect() };
    let (hi, mid, lo) = (at(0.95), at(0.8), at(0.5));
    assert!(hi.is_subset(&mid) && mid.is_subset(&lo));
    let test: BTreeSet<usize> = split.test.iter().copied().collect();
    assert!(lo.is_subset(&test));
}
