//! Graph heterophily measurements and convolution-agnostic gated GNNs.
//!
//! - [`graph`]: CSR graphs, dataset bundles, synthetic generators, edge noise
//! - [`metrics`]: homophily ratios, neighbor-identifiability entropy, Kendall tau
//! - [`autodiff`]: reverse-mode tape over dense matrices, Adam
//! - [`models`]: GCN/GIN/GAT kernels, the gated decoupled model and its variants
//! - [`trainer`]: full-batch training, grid search, depth and noise sweeps

pub mod autodiff;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{DatasetBundle, Graph, NodeTable, Split, SplitSet};
pub use linalg::Matrix;
pub use metrics::MetricReport;
pub use models::{Checkpoint, Kernel, Mixer, Mode, Model, ModelConfig, Norm};
pub use trainer::{Grid, TrainConfig, TrainReport};
