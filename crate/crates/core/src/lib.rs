//! Joint graph and weight sparsification of GCNs under structure poisoning.
//!
//! The pipeline: load or generate a graph, poison it ([`attacks`]), derive
//! pseudo labels for test nodes from a feature-only MLP ([`pseudo`]), then
//! alternate mask training and magnitude pruning of edges and weights
//! ([`sparsifier`]) to find a sparse subgraph and subnetwork that retrain well.

pub mod adam;
pub mod adjacency;
pub mod attacks;
pub mod checkpoint;
pub mod dense;
pub mod error;
pub mod gcn;
pub mod graph;
pub mod losses;
pub mod mlp;
pub mod par;
pub mod pseudo;
pub mod report;
pub mod rng;
pub mod sparsifier;

pub use error::{Error, Result};
pub use gcn::{GcnState, MaskPair, WeightMasks};
pub use graph::{Graph, NodeSplit};
pub use losses::LossWeights;
pub use sparsifier::{run_args, ArgsConfig, ArgsProblem};
