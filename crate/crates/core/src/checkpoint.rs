//! Model checkpoints and ticket files.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::gcn::{GcnState, MaskPair, WeightMasks};
use crate::graph::write_file;

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_file(path, &text)
}

/// GCN weights and their initialization snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub num_features: usize,
    pub hidden: usize,
    pub num_classes: usize,
    pub seed: u64,
    pub w0: Matrix,
    pub w1: Matrix,
    pub theta0_w0: Matrix,
    pub theta0_w1: Matrix,
}

impl Checkpoint {
    pub fn from_gcn(gcn: &GcnState) -> Self {
        let (t0, t1) = gcn.init_snapshot();
        Self {
            num_features: gcn.w0.rows(),
            hidden: gcn.hidden_dim(),
            num_classes: gcn.w1.cols(),
            seed: gcn.seed(),
            w0: gcn.w0.clone(),
            w1: gcn.w1.clone(),
            theta0_w0: t0.clone(),
            theta0_w1: t1.clone(),
        }
    }

    pub fn to_gcn(&self) -> Result<GcnState> {
        let shapes = [
            (self.w0.shape(), (self.num_features, self.hidden)),
            (self.theta0_w0.shape(), (self.num_features, self.hidden)),
            (self.w1.shape(), (self.hidden, self.num_classes)),
            (self.theta0_w1.shape(), (self.hidden, self.num_classes)),
        ];
        if let Some((got, want)) = shapes.iter().find(|(g, w)| g != w) {
            return Err(Error::Dimension(format!("checkpoint matrix {got:?}, expected {want:?}")));
        }
        let mut gcn = GcnState::from_weights(self.theta0_w0.clone(), self.theta0_w1.clone(), self.seed);
        gcn.w0.clone_from(&self.w0);
        gcn.w1.clone_from(&self.w1);
        Ok(gcn)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Run-length encode a bitstring as comma-separated `<bit>x<count>` runs,
/// e.g. `1x300,0x12`. Empty input encodes to the empty string.
pub fn rle_encode(bits: impl IntoIterator<Item = bool>) -> String {
    let mut runs: Vec<(bool, usize)> = Vec::new();
    for b in bits {
        match runs.last_mut() {
            Some((v, n)) if *v == b => *n += 1,
            _ => runs.push((b, 1)),
        }
    }
    runs.iter()
        .map(|&(b, n)| format!("{}x{n}", u8::from(b)))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn rle_decode(s: &str) -> Result<Vec<bool>> {
    let mut out = Vec::new();
    if s.is_empty() {
        return Ok(out);
    }
    for run in s.split(',') {
        let bad = || Error::Config(format!("malformed run {run:?} in run-length mask"));
        let (bit, count) = run.split_once('x').ok_or_else(bad)?;
        let bit = match bit {
            "0" => false,
            "1" => true,
            _ => return Err(bad()),
        };
        let count: usize = count.parse().map_err(|_| bad())?;
        out.extend(std::iter::repeat_n(bit, count));
    }
    Ok(out)
}

/// A sparsified graph and network: surviving edges, binary weight masks and
/// a pointer to the `Θ⁰` checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TicketFile {
    pub kept_edges: Vec<[usize; 2]>,
    pub weight_mask_w0: String,
    pub weight_mask_w1: String,
    pub weight_mask_w0_shape: [usize; 2],
    pub weight_mask_w1_shape: [usize; 2],
    pub theta0_checkpoint: String,
    pub config: serde_json::Value,
    pub report_path: String,
}

impl TicketFile {
    /// `edges` must be aligned with `masks.edge`.
    pub fn new(
        edges: &[(usize, usize)],
        masks: &MaskPair,
        theta0_checkpoint: &str,
        config: serde_json::Value,
        report_path: &str,
    ) -> Result<Self> {
        if edges.len() != masks.edge.len() {
            return Err(Error::Dimension(format!(
                "{} edges for {} edge-mask values",
                edges.len(),
                masks.edge.len()
            )));
        }
        let bits = |m: &Matrix| rle_encode(m.as_slice().iter().map(|&v| v != 0.0));
        Ok(Self {
            kept_edges: edges
                .iter()
                .zip(&masks.edge)
                .filter(|(_, &m)| m != 0.0)
                .map(|(&(a, b), _)| [a, b])
                .collect(),
            weight_mask_w0: bits(&masks.weights.w0),
            weight_mask_w1: bits(&masks.weights.w1),
            weight_mask_w0_shape: [masks.weights.w0.rows(), masks.weights.w0.cols()],
            weight_mask_w1_shape: [masks.weights.w1.rows(), masks.weights.w1.cols()],
            theta0_checkpoint: theta0_checkpoint.to_string(),
            config,
            report_path: report_path.to_string(),
        })
    }

    /// Decode the binary weight masks.
    pub fn weight_masks(&self) -> Result<WeightMasks> {
        let decode = |s: &str, [r, c]: [usize; 2]| -> Result<Matrix> {
            let bits = rle_decode(s)?;
            Matrix::from_vec(r, c, bits.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect())
        };
        Ok(WeightMasks {
            w0: decode(&self.weight_mask_w0, self.weight_mask_w0_shape)?,
            w1: decode(&self.weight_mask_w1, self.weight_mask_w1_shape)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}
