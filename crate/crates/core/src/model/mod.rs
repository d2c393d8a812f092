//! The LoGo forecaster: per-context recurrent graph encoders, fusion, a
//! convolutional decoder, and training.

mod config;
mod decoder;
mod layers;
mod logo;
mod params;
mod train;
mod variant;

use thiserror::Error;

use crate::eval::EvalError;
use crate::event::Day;
use crate::kernel::KernelError;

pub use config::{ModelConfig, TrainConfig, DEFAULT_SLOPE, SLOPE_RANGE};
pub use decoder::{decode, score_candidates};
pub use layers::{aggregate_layers, encode_branch, gru_step, rgcn_layer, BranchEncoding};
pub use logo::{softmax, LogoModel};
pub use params::{
    BoundParams, BranchParams, BranchVars, DecoderParams, DecoderVars, Dims, GruParams, GruVars, LogoParams, RgcnVars,
    RgcnWeights,
};
pub use train::{train, train_with, write_train_log, EarlyStopping, EpochLog, TrainOutcome};
pub use variant::{
    Context, DecodeSettings, EarlyFusion, Encodings, FusionStrategy, LateFusion, QueryRows, VariantRegistry,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("unknown variant {name:?} (known: {known})")]
    UnknownVariant { name: String, known: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty query batch")]
    EmptyBatch,
    #[error("non-finite loss {value} in epoch {epoch} at day {time}")]
    NonFiniteLoss { epoch: usize, time: Day, value: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
