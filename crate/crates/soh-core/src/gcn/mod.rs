//! The estimation model: a single graph-convolution layer with symmetric
//! degree normalization, global attention pooling, a dense readout head,
//! squared-error loss, exact reverse-mode gradients, and Adam updates.
//!
//! Everything runs in 64-bit floating point; the gradient path is checked
//! against central finite differences in the test suite.

mod adam;
mod model;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use model::{
    backward, forward, loss, normalize_adjacency, prepare, ForwardCache, GcnGrads, GcnParams,
    PreparedGraph,
};
pub use train::{train, EarlyStop, TrainConfig, TrainResult};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GcnError {
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
    #[error("prediction and label vectors have different lengths: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("forward cache does not match the given graph and parameters")]
    StaleCache,
    #[error("node {node} has non-positive degree {degree}")]
    NonPositiveDegree { node: usize, degree: f64 },
    #[error("training graph for cycle {0} is missing a label")]
    MissingLabel(usize),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("loss diverged at epoch {epoch}: {loss}")]
    DivergenceDetected { epoch: usize, loss: f64 },
}
