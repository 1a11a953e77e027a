//! Node-attributed undirected graphs, dataset ingestion, largest connected
//! component extraction, node splits and a stochastic block model generator.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::rng;

/// Undirected graph with node features and labels. Edges are stored once,
/// canonically as `(i, j)` with `i < j`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Graph {
    /// Build a validated graph. Edge pairs may come in any orientation and
    /// may repeat; self-loops are rejected.
    pub fn new(
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::InvalidGraph(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::InvalidGraph(format!(
                "label {l} of node {i} out of range for {num_classes} classes"
            )));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) references a node >= {n}"
                )));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self {
            n_nodes: n,
            edges: set.into_iter().collect(),
            features,
            labels,
            num_classes,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    /// Same nodes, features and labels with a different edge set.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Graph::new(
            edges,
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
        )
    }

    /// Write the graph as a dataset directory (`edges.txt`, `features.csv`, `labels.txt`).
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut edges = String::new();
        for (a, b) in &self.edges {
            edges.push_str(&format!("{a} {b}\n"));
        }
        write_file(&dir.join("edges.txt"), &edges)?;
        let mut feats = String::new();
        for i in 0..self.n_nodes {
            let row: Vec<String> = self.features.row(i).iter().map(|v| format!("{v}")).collect();
            feats.push_str(&row.join(","));
            feats.push('\n');
        }
        write_file(&dir.join("features.csv"), &feats)?;
        let labels: String = self.labels.iter().map(|l| format!("{l}\n")).collect();
        write_file(&dir.join("labels.txt"), &labels)
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Load a dataset directory. The class count is inferred as `max label + 1`.
pub fn load_graph(dir: &Path) -> Result<Graph> {
    load_graph_with_classes(dir, None)
}

/// Load a dataset directory, checking labels against a known class count.
pub fn load_graph_with_classes(dir: &Path, num_classes: Option<usize>) -> Result<Graph> {
    let feat_path = dir.join("features.csv");
    let mut rows = Vec::new();
    for (ln, line) in read_file(&feat_path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                path: feat_path.clone(),
                line: ln + 1,
                msg: e.to_string(),
            })?;
        rows.push(row);
    }
    let features = Matrix::from_rows(&rows)?;

    let label_path = dir.join("labels.txt");
    let mut labels = Vec::new();
    for (ln, line) in read_file(&label_path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(line.parse::<usize>().map_err(|e| Error::Parse {
            path: label_path.clone(),
            line: ln + 1,
            msg: e.to_string(),
        })?);
    }

    let edge_path = dir.join("edges.txt");
    let mut edges = Vec::new();
    for (ln, line) in read_file(&edge_path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: edge_path.clone(),
            line: ln + 1,
            msg,
        };
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(format!("expected two node ids, got {line:?}")));
        };
        let a = a.parse::<usize>().map_err(|e| parse_err(e.to_string()))?;
        let b = b.parse::<usize>().map_err(|e| parse_err(e.to_string()))?;
        edges.push((a, b));
    }

    let c = match num_classes {
        Some(c) => c,
        None => labels.iter().max().map_or(1, |m| m + 1),
    };
    Graph::new(edges, features, labels, c)
}

/// Restrict to the largest connected component. Ties between equally large
/// components go to the one holding the smallest original node id. Retained
/// nodes keep their relative order. Returns the old→new id map.
pub fn largest_connected_component(g: &Graph) -> (Graph, Vec<Option<usize>>) {
    let n = g.n_nodes();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(a, b) in g.edges() {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            // keep the smaller id as root so the root is the component minimum
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            parent[hi] = lo;
        }
    }
    let mut size = vec![0usize; n];
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    for &r in &roots {
        size[r] += 1;
    }
    // roots are component minima; scanning ascending makes the tie-break implicit
    let best = (0..n).filter(|&i| roots[i] == i).fold(None, |acc: Option<usize>, r| match acc {
        Some(b) if size[b] >= size[r] => Some(b),
        _ => Some(r),
    });
    let mut map = vec![None; n];
    let mut kept = Vec::new();
    if let Some(best) = best {
        for i in 0..n {
            if roots[i] == best {
                map[i] = Some(kept.len());
                kept.push(i);
            }
        }
    }
    let features = Matrix::from_fn(kept.len(), g.num_features(), |i, j| {
        g.features().get(kept[i], j)
    });
    let labels = kept.iter().map(|&i| g.labels()[i]).collect();
    let edges = g
        .edges()
        .iter()
        .filter_map(|&(a, b)| Some((map[a]?, map[b]?)));
    let sub = Graph::new(edges, features, labels, g.num_classes())
        .expect("subgraph of a valid graph is valid");
    (sub, map)
}

/// Disjoint train/validation/test node index sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Train,
    Val,
    Test,
    Unassigned,
}

impl NodeSplit {
    pub fn new(mut train: Vec<usize>, mut val: Vec<usize>, mut test: Vec<usize>, n: usize) -> Result<Self> {
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        if train.is_empty() {
            return Err(Error::EmptyIndex("train split"));
        }
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&val).chain(&test) {
            if i >= n {
                return Err(Error::InvalidGraph(format!("split references node {i} >= {n}")));
            }
            if seen[i] {
                return Err(Error::InvalidGraph(format!("node {i} appears in two splits")));
            }
            seen[i] = true;
        }
        Ok(Self { train, val, test })
    }

    /// Per-node role lookup table.
    pub fn roles(&self, n: usize) -> Vec<NodeRole> {
        let mut r = vec![NodeRole::Unassigned; n];
        for &i in &self.train {
            r[i] = NodeRole::Train;
        }
        for &i in &self.val {
            r[i] = NodeRole::Val;
        }
        for &i in &self.test {
            r[i] = NodeRole::Test;
        }
        r
    }

    pub fn load(path: &Path, n: usize) -> Result<Self> {
        let text = read_file(path)?;
        let raw: NodeSplit = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        NodeSplit::new(raw.train, raw.val, raw.test, n)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("split serializes");
        write_file(path, &text)
    }

    /// Re-index through an old→new map (e.g. from LCC extraction), dropping
    /// nodes that were removed.
    pub fn remap(&self, map: &[Option<usize>], n_new: usize) -> Result<Self> {
        let f = |v: &[usize]| v.iter().filter_map(|&i| map.get(i).copied().flatten()).collect();
        NodeSplit::new(f(&self.train), f(&self.val), f(&self.test), n_new)
    }
}

/// `floor(x)` that tolerates representation error just below an integer.
pub(crate) fn floor_count(fraction: f64, total: usize) -> usize {
    (fraction * total as f64 + 1e-9).floor() as usize
}

/// Seeded random split. Train and validation sizes are `floor(fraction·n)`;
/// the test set receives the remainder when the fractions sum to one.
pub fn make_split(n: usize, fractions: (f64, f64, f64), seed: u64) -> Result<NodeSplit> {
    let (ft, fv, fs) = fractions;
    if ft < 0.0 || fv < 0.0 || fs < 0.0 || ft + fv + fs > 1.0 + 1e-9 {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be non-negative and sum to at most 1"
        )));
    }
    let n_train = floor_count(ft, n);
    let n_val = floor_count(fv, n);
    let n_test = if (ft + fv + fs - 1.0).abs() < 1e-9 {
        n - n_train - n_val
    } else {
        floor_count(fs, n)
    };
    if n_train == 0 {
        return Err(Error::EmptyIndex("train split"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng(seed));
    let train = order[..n_train].to_vec();
    let val = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..n_train + n_val + n_test].to_vec();
    NodeSplit::new(train, val, test, n)
}

/// Stochastic block model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub seed: u64,
}

/// Homophilic synthetic graph. Node `i` belongs to block `i / nodes_per_block`,
/// which is also its label. Block `b` owns a contiguous group of feature
/// dimensions; its centroid is 1 on that group and 0 elsewhere, and each
/// node's features are the centroid plus N(0, σ²) noise.
pub fn generate_sbm(p: &SbmParams) -> Result<Graph> {
    if p.blocks < 2 {
        return Err(Error::Config("SBM needs at least two blocks".into()));
    }
    if p.nodes_per_block == 0 {
        return Err(Error::Config("SBM with zero nodes per block has empty classes".into()));
    }
    if p.p_in.is_nan() || p.p_out.is_nan() || p.p_in <= p.p_out || p.p_out < 0.0 || p.p_in > 1.0 {
        return Err(Error::Config(format!(
            "SBM probabilities must satisfy 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
            p.p_in, p.p_out
        )));
    }
    if p.feature_dim < p.blocks {
        return Err(Error::Config(format!(
            "feature_dim {} smaller than block count {}",
            p.feature_dim, p.blocks
        )));
    }
    if p.feature_noise.is_nan() || p.feature_noise < 0.0 {
        return Err(Error::Config("feature noise must be non-negative".into()));
    }
    let n = p.blocks * p.nodes_per_block;
    let block = |i: usize| i / p.nodes_per_block;

    let mut edge_rng = rng::named_rng(p.seed, "sbm-edges");
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let prob = if block(i) == block(j) { p.p_in } else { p.p_out };
            if edge_rng.random::<f64>() < prob {
                edges.push((i, j));
            }
        }
    }

    let mut feat_rng = rng::named_rng(p.seed, "sbm-features");
    let noise = Normal::new(0.0, p.feature_noise.max(f64::MIN_POSITIVE)).expect("valid normal");
    let group = |d: usize| d * p.blocks / p.feature_dim;
    let features = Matrix::from_fn(n, p.feature_dim, |i, d| {
        let centroid = if group(d) == block(i) { 1.0 } else { 0.0 };
        if p.feature_noise > 0.0 {
            centroid + noise.sample(&mut feat_rng)
        } else {
            centroid
        }
    });
    let labels = (0..n).map(block).collect();
    Graph::new(edges, features, labels, p.blocks)
}
