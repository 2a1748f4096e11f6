//! Run configuration: a TOML file with optional `[dataset]`, `[train]`,
//! `[physics]` and `[energy]` tables. Missing keys take their defaults.
//!
//! ```toml
//! [dataset]
//! recordings_per_class = 40
//! window_stride = 6
//!
//! [dataset.noise]
//! multiplicative_sigma = 0.01
//! additive_sigma = 5.0
//! adc_bits = 16
//!
//! [train]
//! max_epochs = 100
//! patience = 10
//!
//! [energy]
//! infer_case = "1"
//! tx_case = "2"
//! n_infer = 9
//! n_tx = 1
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use hemoscope::nn::TrainConfig;
use hemoscope::sim::DatasetConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub duration_s: f64,
    pub sample_period_s: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self { duration_s: 120.0, sample_period_s: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub infer_case: String,
    pub tx_case: String,
    pub n_infer: u32,
    pub n_tx: u32,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self { infer_case: "1".into(), tx_case: "2".into(), n_infer: 9, n_tx: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub physics: PhysicsConfig,
    pub energy: EnergyConfig,
}

/// Raised for problems the caller must fix on the command line (exit 2).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self =
            toml::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        cfg.dataset.validate().map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        Ok(cfg)
    }
}

/// Everything needed to rerun one command: its name, seed, inputs and the
/// full configuration with defaults filled in.
#[derive(Debug, Serialize)]
pub struct Resolved<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub inputs: BTreeMap<&'a str, String>,
    #[serde(flatten)]
    pub config: &'a RunConfig,
}

impl Resolved<'_> {
    pub fn to_toml(&self) -> anyhow::Result<String> {
        toml::to_string(self).context("serializing resolved config")
    }

    /// Writes `resolved_config.toml` into `dir` and returns its sha256 (hex).
    pub fn write(&self, dir: &Path) -> anyhow::Result<String> {
        let text = self.to_toml()?;
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("resolved_config.toml"), &text)?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }
}
