//! Semi-asymmetric convolution network with hand-derived gradients.
//!
//! Per window: CBAA features → batchnorm → `L` stages of (1×H then V×1)
//! valid cross-correlation → flatten → linear → ReLU → linear → scalar.

mod checkpoint;
pub mod layers;
mod model;
pub mod optim;
mod tensor;

pub use checkpoint::CheckpointError;
pub use layers::{BnStats, MapShape};
pub use model::{BatchPass, Dims, Hyper, Params, SacModel};
pub use optim::{NAdam, PlateauScheduler};
pub use tensor::Tensor;

use crate::encoder::EncoderError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("backward called before forward")]
    State,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("invalid hyperparameters: {0}")]
    Hyper(String),
}
