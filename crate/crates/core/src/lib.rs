//! Time series forecasting on first-order difference sequences.
//!
//! The crate is organised bottom-up:
//!
//! - [`ingest`]: `.tsf` archive files and plain CSV into [`ingest::Dataset`]s.
//! - [`pipeline`]: differencing, sliding windows, restoration, the naive baseline
//!   and recursive multi-step forecasting.
//! - [`encoder`]: the partitioned universe of discourse and the global atrous
//!   sliding window encoding, including the central-bidirectional atrous filter.
//! - [`network`]: the semi-asymmetric convolutional network with hand-written
//!   gradients, NAdam and plateau scheduling, checkpoints.
//! - [`train`]: the training loop and the [`train::Forecaster`] that ties a
//!   trained model to the pipeline.
//! - [`eval`]: MAE / RMSE reports and the Nemenyi critical difference.
//!
//! Data-parallel loops go through [`exec::Execution`]; with the `parallel`
//! feature (default) they run on rayon, otherwise sequentially. Reductions are
//! always performed in input order, so both paths produce identical bits.

pub mod encoder;
pub mod eval;
pub mod exec;
pub mod ingest;
pub mod network;
pub mod pipeline;
pub mod train;

pub use encoder::{CbaaFeatures, EncodedWindow, Universe};
pub use exec::Execution;
pub use ingest::{Dataset, Frequency, MissingPolicy, TimeSeries};
pub use network::{Hyper, SacModel};
pub use pipeline::{DiffSeries, WindowSet};
pub use train::{Forecaster, TrainConfig, TrainOutcome};
