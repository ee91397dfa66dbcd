//! Dense `f64` tensors, reverse-mode differentiation and the Adam optimizer.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod graph;
pub mod kernels;
pub mod linalg;
pub mod nn;
mod params;
mod tensor;

pub use adam::{AdamState, ADAM_EPS};
pub use checkpoint::{Checkpoint, CheckpointEntry};
pub use graph::{sigmoid, FlopCounter, Gradients, Graph, Var};
pub use kernels::{bce_loss, conv1d, global_max_pool, layer_norm, matmul, mse_loss, softmax};
pub use params::{glorot_uniform, Bindings, Param, ParamId, ParamStore};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
