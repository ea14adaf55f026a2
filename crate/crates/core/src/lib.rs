//! Multi-order actor-critic graph classification.
//!
//! The estimator embeds each graph at several Laplacian orders, weighs the
//! orders with a boosting-style critic, and classifies the fused embedding.
//! The interpreter learns relaxed edge and feature masks that preserve the
//! estimator's predictions, which exposes the influential subgraph.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
#[cfg(feature = "cli")]
pub mod cli;
pub mod estimator;
pub mod graph;
pub mod interpreter;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod synth;

#[cfg(test)]
pub(crate) mod testutil;

pub use graph::{AdjacencyMatrix, FeatureMatrix, NormalizedLaplacian};
pub use linalg::Matrix;
pub use synth::{GraphDataset, Instance, Label};
