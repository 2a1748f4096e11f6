use std::fmt::Write as _;
use std::path::Path;

use super::model::{ModelParams, HIDDEN_UNITS};
use super::{Normalizer, Result};
use crate::sim::{FlowClass, Window};
use crate::Exec;

/// Post-ReLU fc1 activations of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub recording_id: String,
    pub start: usize,
    pub label: FlowClass,
    pub mixture: Option<String>,
    pub embedding: Vec<f64>,
}

pub fn export_features(
    model: &ModelParams,
    normalizer: &Normalizer,
    windows: &[Window],
    exec: Exec,
) -> Result<Vec<FeatureRow>> {
    exec.map(windows, |w| {
        let fw = model.forward(&normalizer.normalize(w))?;
        Ok(FeatureRow {
            recording_id: w.recording_id.clone(),
            start: w.start,
            label: w.label,
            mixture: w.mixture.clone(),
            embedding: fw.hidden,
        })
    })
    .into_iter()
    .collect()
}

/// `recording_id,start,label,mixture,f0..f63`
pub fn features_csv(rows: &[FeatureRow]) -> String {
    let mut s = String::from("recording_id,start,label,mixture");
    for k in 0..HIDDEN_UNITS {
        let _ = write!(s, ",f{k}");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{},{},{}", r.recording_id, r.start, r.label, r.mixture.as_deref().unwrap_or(""));
        for v in &r.embedding {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn write_features_csv(rows: &[FeatureRow], path: &Path) -> Result<()> {
    std::fs::write(path, features_csv(rows))?;
    Ok(())
}
