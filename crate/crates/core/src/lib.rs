//! Tooling for screen-understanding datasets: the screen schema format,
//! variable-resolution patching geometry, LLM-driven task generation,
//! training mixtures and evaluation metrics.

pub mod schema;
pub mod patching;
pub mod metrics;
pub mod compose;
pub mod mixtures;
pub mod taskgen;
pub mod cli;
