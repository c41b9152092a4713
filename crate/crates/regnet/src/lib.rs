//! Reconstruction of directed (possibly cyclic) gene regulatory networks
//! from knockout perturbation screens plus steady-state expression data.

pub mod consensus;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod graph;
pub mod ordering;
pub mod pipeline;
pub mod screen;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
