//! Tiny 2D-CNN for six-way flow-rate classification, written from scratch.
//!
//! ```text
//! 1×6×24 ─conv3×3(4)─ReLU─pool─▶ 4×3×12 ─conv3×3(8)─ReLU─pool─▶ 8×1×6
//!        ─flatten─▶ 48 ─fc(64)─ReLU─▶ 64 ─fc(6)─▶ logits
//! ```

mod eval;
mod features;
mod file;
mod gradcheck;
mod layers;
mod model;
mod normalize;
mod tensor;
mod train;

pub(crate) use eval::argmax;
pub use eval::{evaluate, predict, predict_all, EvalReport};
pub use features::{export_features, features_csv, write_features_csv, FeatureRow};
pub use file::{TrainedModel, MODEL_FORMAT, MODEL_SCHEMA_VERSION};
pub use gradcheck::{gradient_check, GradCheck, GRADCHECK_FLOOR};
pub use layers::{conv2d_3x3_pad1, dense, maxpool2x2, relu, softmax, MaxPool};
pub use model::{
    loss_and_grad, BatchLoss, Forward, ModelParams, ParamTensor, Sample, CONV1_OUT, CONV2_OUT, FLAT_FEATURES,
    HIDDEN_UNITS, INPUT_H, INPUT_W, NUM_CLASSES, PARAM_COUNT,
};
pub use normalize::Normalizer;
pub use tensor::Tensor;
pub use train::{train, train_with, EpochStats, TrainConfig, TrainOutcome};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label {0} outside 0..6")]
    InvalidLabel(usize),
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("model file: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
