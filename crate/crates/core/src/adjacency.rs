//! Sparse symmetric adjacency with self-loops and mask-weighted degree
//! normalization.

use std::sync::Arc;

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Canonical undirected edge list plus a CSR view listing, for every node,
/// its neighbours together with the id of the connecting edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeIndex {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    adj: Vec<(usize, usize)>,
}

impl EdgeIndex {
    /// `edges` must be canonical (`i < j`), unique, and in range.
    pub fn new(n_nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut degree = vec![0usize; n_nodes];
        for (k, &(a, b)) in edges.iter().enumerate() {
            if a >= b || b >= n_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge {k} = ({a}, {b}) is not canonical for {n_nodes} nodes"
                )));
            }
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = Vec::with_capacity(n_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n_nodes].to_vec();
        let mut adj = vec![(0, 0); offsets[n_nodes]];
        for (k, &(a, b)) in edges.iter().enumerate() {
            adj[fill[a]] = (b, k);
            fill[a] += 1;
            adj[fill[b]] = (a, k);
            fill[b] += 1;
        }
        Ok(Self {
            n_nodes,
            edges,
            offsets,
            adj,
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

    /// `(neighbour, edge id)` pairs of node `i`.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adj[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// `Â = D^{-1/2} (M ⊙ A + I) D^{-1/2}` with `d_i = 1 + Σ_k (M ⊙ A)_ik`.
///
/// Stored as the diagonal plus one value per undirected edge, so symmetry is
/// structural.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    index: Arc<EdgeIndex>,
    weights: Vec<f64>,
    degrees: Vec<f64>,
    inv_sqrt_deg: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
}

/// Normalize the mask-weighted adjacency. Mask values may be any real, but a
/// non-positive resulting degree is an error.
pub fn normalized_adjacency(index: &Arc<EdgeIndex>, mask: &[f64]) -> Result<NormalizedAdjacency> {
    if mask.len() != index.n_edges() {
        return Err(Error::Dimension(format!(
            "{} mask values for {} edges",
            mask.len(),
            index.n_edges()
        )));
    }
    let n = index.n_nodes();
    let mut degrees = vec![1.0; n];
    // accumulate per node in CSR order so the sum order is fixed
    for (i, d) in degrees.iter_mut().enumerate() {
        for &(_, e) in index.neighbors(i) {
            *d += mask[e];
        }
    }
    if let Some((node, &degree)) = degrees.iter().enumerate().find(|(_, d)| d.is_nan() || **d <= 0.0) {
        return Err(Error::DegenerateDegree { node, degree });
    }
    let inv_sqrt_deg: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let diag = degrees.iter().map(|d| 1.0 / d).collect();
    let off = index
        .edges()
        .iter()
        .zip(mask)
        .map(|(&(a, b), &m)| m * inv_sqrt_deg[a] * inv_sqrt_deg[b])
        .collect();
    Ok(NormalizedAdjacency {
        index: Arc::clone(index),
        weights: mask.to_vec(),
        degrees,
        inv_sqrt_deg,
        diag,
        off,
    })
}

impl NormalizedAdjacency {
    pub fn n_nodes(&self) -> usize {
        self.index.n_nodes()
    }

    pub fn index(&self) -> &Arc<EdgeIndex> {
        &self.index
    }

    /// Mask value on each edge.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn inv_sqrt_degrees(&self) -> &[f64] {
        &self.inv_sqrt_deg
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Off-diagonal value for each edge id.
    pub fn edge_values(&self) -> &[f64] {
        &self.off
    }

    /// `Â · m`. `Â` is symmetric, so this is also `Âᵀ · m`.
    pub fn matmul(&self, m: &Matrix) -> Matrix {
        self.matmul_with(par::default_exec(), m)
    }

    pub fn matmul_with(&self, exec: Exec, m: &Matrix) -> Matrix {
        assert_eq!(m.rows(), self.n_nodes(), "adjacency product shape mismatch");
        let cols = m.cols();
        let mut out = Matrix::zeros(m.rows(), cols);
        par::for_each_row(exec, out.as_mut_slice(), cols, |i, orow| {
            let d = self.diag[i];
            for (o, &v) in orow.iter_mut().zip(m.row(i)) {
                *o = d * v;
            }
            for &(j, e) in self.index.neighbors(i) {
                let w = self.off[e];
                if w != 0.0 {
                    for (o, &v) in orow.iter_mut().zip(m.row(j)) {
                        *o += w * v;
                    }
                }
            }
        });
        out
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.n_nodes();
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            a.set(i, i, self.diag[i]);
        }
        for (e, &(i, j)) in self.index.edges().iter().enumerate() {
            a.set(i, j, self.off[e]);
            a.set(j, i, self.off[e]);
        }
        a
    }
}

/// `1 − nnz(mask) / len(mask)`; zero for an empty mask.
pub fn mask_sparsity(mask: &[f64]) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    let nnz = mask.iter().filter(|&&v| v != 0.0).count();
    1.0 - nnz as f64 / mask.len() as f64
}
