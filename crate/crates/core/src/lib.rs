//! Dual-space multi-channel graph convolutional network for semi-supervised
//! node classification on homophilous and heterophilous graphs.
//!
//! Node features are propagated over two graphs: the given topology and a
//! k-nearest-neighbour graph built from feature cosine similarity. Each view
//! has its own two-layer GCN encoder with initial-residual connections, a
//! third encoder with shared weights extracts what both views have in common,
//! and feature-level attention fuses the three embeddings before the softmax
//! classifier.
//!
//! Modules:
//! - [`graph`]: graphs, CSR matrices, homophily, kNN feature graphs.
//! - [`tensor`]: dense matrices, a reverse-mode tape and a finite-difference checker.
//! - [`model`]: the dual-space model and the GCN / kNN-GCN baselines.
//! - [`losses`]: classification, closeness and disparity losses.
//! - [`trainer`]: splits, Adam, the training loop and metrics.
//! - [`lab`]: heterophilous edge injection, sweeps and synthetic graphs.
//! - [`io`]: dataset directories, config files and trace output.

pub mod error;
pub mod graph;
pub mod io;
pub mod lab;
pub mod losses;
pub mod model;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
