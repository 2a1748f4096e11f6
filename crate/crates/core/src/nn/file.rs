//! JSON model container.
//!
//! ```json
//! { "format": "hemoscope-tinycnn", "schema_version": 1,
//!   "layers": [{"name": "conv1.weight", "shape": [4,1,3,3]}, ...],
//!   "tensors": {"conv1.weight": [...], ...},
//!   "normalization": "window-relative-absorbance+corpus-zscore", "normalizer": {...},
//!   "train_config_hash": "<hex>" }
//! ```
//!
//! Values are written with shortest round-trip formatting, so a saved model
//! reloads bit-for-bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelParams, ParamTensor, PARAM_COUNT};
use super::{NnError, Normalizer, Result};

pub const MODEL_FORMAT: &str = "hemoscope-tinycnn";
pub const MODEL_SCHEMA_VERSION: u32 = 1;
const NORMALIZATION: &str = "window-relative-absorbance+corpus-zscore";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub normalizer: Normalizer,
    pub train_config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct LayerSpec {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    schema_version: u32,
    layers: Vec<LayerSpec>,
    tensors: BTreeMap<String, Vec<f64>>,
    normalization: String,
    normalizer: Normalizer,
    train_config_hash: String,
}

impl TrainedModel {
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            schema_version: MODEL_SCHEMA_VERSION,
            layers: ParamTensor::ALL
                .iter()
                .map(|t| LayerSpec { name: t.name().into(), shape: t.shape().to_vec() })
                .collect(),
            tensors: ParamTensor::ALL.iter().map(|t| (t.name().to_string(), self.params.tensor(*t).to_vec())).collect(),
            normalization: NORMALIZATION.into(),
            normalizer: self.normalizer.clone(),
            train_config_hash: self.train_config_hash.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let bad = |m: String| Err(NnError::Schema(m));
        if file.format != MODEL_FORMAT {
            return bad(format!("format `{}` is not {MODEL_FORMAT}", file.format));
        }
        if file.schema_version != MODEL_SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {}", file.schema_version));
        }
        if file.normalization != NORMALIZATION {
            return bad(format!("unknown normalization `{}`", file.normalization));
        }
        let mut flat = Vec::with_capacity(PARAM_COUNT);
        for t in ParamTensor::ALL {
            match file.layers.iter().find(|l| l.name == t.name()) {
                Some(l) if l.shape == t.shape() => {}
                Some(l) => return bad(format!("{} has shape {:?}, expected {:?}", t.name(), l.shape, t.shape())),
                None => return bad(format!("missing layer {}", t.name())),
            }
            let data =
                file.tensors.get(t.name()).ok_or_else(|| NnError::Schema(format!("missing tensor {}", t.name())))?;
            if data.len() != t.len() {
                return bad(format!("{} has {} values, expected {}", t.name(), data.len(), t.len()));
            }
            flat.extend_from_slice(data);
        }
        file.normalizer.validate()?;
        Ok(Self {
            params: ModelParams::from_flat(flat)?,
            normalizer: file.normalizer,
            train_config_hash: file.train_config_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
