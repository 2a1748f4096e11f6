//! Post-training int8 quantization and an integer-only inference path.
//!
//! Weights are quantized per tensor and symmetrically; activations per
//! tensor and asymmetrically from calibration min/max. Biases are int32 at
//! `input_scale × weight_scale`. Accumulators are int32 and are moved to the
//! next activation's scale by a fixed-point multiplier (int32 mantissa,
//! right shift, ties away from zero). The output layer's accumulators are
//! dequantized directly, so the class decision is an integer argmax.

mod affine;
mod container;
mod footprint;
mod model;

use std::path::Path;

pub use affine::{quantize_bias, snr_db, QuantParams, Requant, MIN_SCALE};
pub use container::{from_bytes, to_bytes, QMODEL_MAGIC, QMODEL_VERSION};
pub use footprint::{footprint_report, FootprintReport, LayerFootprint};
pub use model::{
    agreement, quantize, ActQuant, Agreement, QForward, QLayer, QTrace, QuantReport, QuantizedModel, TensorReport,
    ACTIVATION_NAMES, LAYER_NAMES,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("input must have 144 values, got {0}")]
    Shape(usize),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("quantized model file is truncated")]
    Truncated,
    #[error("not a quantized model file (bad magic)")]
    BadMagic,
    #[error("unsupported quantized model version {0}")]
    UnsupportedVersion(u16),
    #[error("quantized model file failed its CRC check")]
    CrcMismatch,
    #[error("invalid quantized model: {0}")]
    Format(String),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QuantError>;

impl QuantizedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, to_bytes(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        from_bytes(&std::fs::read(path)?)
    }
}
