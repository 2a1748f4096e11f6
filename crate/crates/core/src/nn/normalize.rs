use serde::{Deserialize, Serialize};

use super::{NnError, Result};
use crate::sim::{Window, FRAME_CHANNELS};

/// Counts below this are clamped before taking logarithms.
pub const MIN_COUNTS: f64 = 1.0;

/// Window-relative absorbance of a row-major `steps × 24` matrix: for each
/// channel, the window's mean log-intensity minus each step's log-intensity.
///
/// A static per-channel gain (LED power, medium background, detector
/// responsivity) cancels exactly, so only the within-window attenuation
/// change remains.
pub fn relative_absorbance(data: &[f64]) -> Vec<f64> {
    let steps = data.len() / FRAME_CHANNELS;
    let logs: Vec<f64> = data.iter().map(|v| v.max(MIN_COUNTS).ln()).collect();
    let mut mean = [0.0; FRAME_CHANNELS];
    for row in logs.chunks_exact(FRAME_CHANNELS) {
        mean.iter_mut().zip(row).for_each(|(m, l)| *m += l);
    }
    mean.iter_mut().for_each(|m| *m /= steps as f64);
    logs.chunks_exact(FRAME_CHANNELS)
        .flat_map(|row| row.iter().zip(&mean).map(|(l, m)| m - l).collect::<Vec<_>>())
        .collect()
}

/// Per-channel Z-score statistics of window-relative absorbance over a
/// calibration corpus.
///
/// Statistics are fixed once fit; a deployed device normalizes with the
/// training-corpus values rather than anything computed from live data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Identifies the calibration corpus.
    pub source: String,
}

/// Floor applied to a channel's standard deviation.
const MIN_STD: f64 = 1e-9;

impl Normalizer {
    /// Fits over every row of every window.
    pub fn fit(windows: &[Window], source: impl Into<String>) -> Result<Self> {
        if windows.is_empty() {
            return Err(NnError::Empty("calibration corpus"));
        }
        let features: Vec<Vec<f64>> = windows.iter().map(|w| relative_absorbance(&w.data)).collect();
        Ok(Self::fit_features(&features, source))
    }

    /// Fits plain Z-score statistics over already-transformed matrices.
    pub fn fit_features(features: &[Vec<f64>], source: impl Into<String>) -> Self {
        let rows = || features.iter().flat_map(|f| f.chunks_exact(FRAME_CHANNELS));
        let mut n = 0usize;
        let mut mean = vec![0.0; FRAME_CHANNELS];
        for row in rows() {
            n += 1;
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
        let mut var = vec![0.0; FRAME_CHANNELS];
        for row in rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n.max(1) as f64).sqrt().max(MIN_STD)).collect();
        Self { mean, std, source: source.into() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != FRAME_CHANNELS || self.std.len() != FRAME_CHANNELS {
            return Err(NnError::Shape("normalizer needs 24 means and 24 deviations".into()));
        }
        if self.std.iter().any(|s| !(*s > 0.0)) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(NnError::Shape("normalizer deviations must be positive".into()));
        }
        Ok(())
    }

    /// Z-scores an already-transformed `steps × 24` matrix.
    pub fn standardize(&self, features: &[f64]) -> Vec<f64> {
        features
            .chunks_exact(FRAME_CHANNELS)
            .flat_map(|row| row.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s))
            .collect()
    }

    /// Raw counts to network input.
    pub fn apply(&self, data: &[f64]) -> Vec<f64> {
        self.standardize(&relative_absorbance(data))
    }

    pub fn normalize(&self, window: &Window) -> Vec<f64> {
        self.apply(&window.data)
    }
}
