//! Compatible label propagation for node classification on graphs of any
//! homophily level.
//!
//! The pipeline trains a feature-only MLP, estimates a class compatibility
//! matrix from the labelled nodes, and propagates beliefs along edges
//! weighted per class. See [`experiment::run_pipeline`] for the end-to-end
//! entry point.

pub mod compat;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod matrix;
pub mod metrics;
pub mod mlp;
pub mod propagation;
pub mod sparse;
pub mod synth;

pub use error::{ClpError, Result};
pub use graph::{Graph, SplitMask, SplitScheme};
pub use matrix::Matrix;
