//! On-disk layout of recordings and datasets.
//!
//! ```text
//! <dir>/dataset.json              schema_version, master_seed, generation config
//! <dir>/manifest.csv              recording_id,class,split,mixture,seed
//! <dir>/classes.csv               index,label,flow_ml_min,train,val,test
//! <dir>/recordings/<id>.csv       t_s,ch1..ch24
//! <dir>/recordings/<id>.meta.json scenario sidecar
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{DatasetBundle, DatasetConfig, ManifestEntry, Split};
use super::types::*;
use super::{Result, SimError};

#[derive(Serialize, Deserialize)]
struct RecordingMeta {
    id: String,
    schema_version: u32,
    label: String,
    scenario: InfusionScenario,
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    schema_version: u32,
    master_seed: u64,
    config: DatasetConfig,
}

fn format_err(path: &Path, msg: impl Into<String>) -> SimError {
    SimError::Format { path: path.display().to_string(), msg: msg.into() }
}

fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

/// The `t_s,ch1..ch24` table.
pub fn frames_csv(frames: &[SpectralFrame]) -> String {
    let mut out = String::from("t_s");
    for k in 1..=FRAME_CHANNELS {
        let _ = write!(out, ",ch{k}");
    }
    out.push('\n');
    for f in frames {
        let _ = write!(out, "{}", f.timestamp_s);
        for v in f.values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Writes `<path>` (CSV) and its `.meta.json` sidecar.
pub fn write_recording_csv(path: &Path, rec: &Recording) -> Result<()> {
    fs::write(path, frames_csv(&rec.frames))?;
    let meta = RecordingMeta {
        id: rec.id.clone(),
        schema_version: rec.schema_version,
        label: rec.scenario.label.label().to_string(),
        scenario: rec.scenario.clone(),
    };
    fs::write(meta_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

/// Parses the `t_s,ch1..ch24` table only.
pub fn read_frames_csv(path: &Path) -> Result<Vec<SpectralFrame>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| format_err(path, "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    let expected_header = std::iter::once("t_s".to_string()).chain((1..=FRAME_CHANNELS).map(|k| format!("ch{k}")));
    if cols.len() != FRAME_CHANNELS + 1 || !cols.iter().zip(expected_header).all(|(a, b)| *a == b) {
        return Err(format_err(path, "header must be t_s,ch1..ch24"));
    }
    let mut frames = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let nums = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| format_err(path, format!("line {}: {e}", n + 2)))?;
        if nums.len() != FRAME_CHANNELS + 1 {
            return Err(format_err(path, format!("line {}: expected 25 fields", n + 2)));
        }
        let mut values = [0.0; FRAME_CHANNELS];
        values.copy_from_slice(&nums[1..]);
        frames.push(SpectralFrame { timestamp_s: nums[0], values });
    }
    Ok(frames)
}

/// Reads a recording CSV together with its sidecar.
pub fn read_recording_csv(path: &Path) -> Result<Recording> {
    let meta_file = meta_path(path);
    let meta: RecordingMeta = serde_json::from_str(&fs::read_to_string(&meta_file)?)?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(format_err(&meta_file, format!("unsupported schema_version {}", meta.schema_version)));
    }
    let frames = read_frames_csv(path)?;
    Ok(Recording { id: meta.id, scenario: meta.scenario, frames, schema_version: meta.schema_version })
}

pub fn write_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    let rec_dir = dir.join("recordings");
    fs::create_dir_all(&rec_dir)?;
    let header = DatasetHeader {
        schema_version: SCHEMA_VERSION,
        master_seed: bundle.master_seed,
        config: bundle.config.clone(),
    };
    fs::write(dir.join("dataset.json"), serde_json::to_string_pretty(&header)? + "\n")?;

    let mut manifest = String::from("recording_id,class,split,mixture,seed\n");
    for m in &bundle.manifest {
        let _ = writeln!(
            manifest,
            "{},{},{},{},{}",
            m.recording_id,
            m.class,
            m.split,
            m.mixture.as_deref().unwrap_or(""),
            m.seed
        );
    }
    fs::write(dir.join("manifest.csv"), manifest)?;

    let mut classes = String::from("index,label,flow_ml_min,train,val,test\n");
    for c in FlowClass::ALL {
        let count = |s| bundle.manifest.iter().filter(|m| m.class == c && m.split == s).count();
        let _ = writeln!(
            classes,
            "{},{},{},{},{},{}",
            c.index(),
            if c.is_bleeding() { "bleeding" } else { "interference" },
            c.label(),
            count(Split::Train),
            count(Split::Val),
            count(Split::Test)
        );
    }
    fs::write(dir.join("classes.csv"), classes)?;

    for rec in &bundle.recordings {
        write_recording_csv(&rec_dir.join(format!("{}.csv", rec.id)), rec)?;
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<DatasetBundle> {
    let header_path = dir.join("dataset.json");
    let header: DatasetHeader = serde_json::from_str(&fs::read_to_string(&header_path)?)?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(format_err(&header_path, "unsupported schema_version"));
    }
    let manifest_path = dir.join("manifest.csv");
    let text = fs::read_to_string(&manifest_path)?;
    let mut manifest = Vec::new();
    let mut recordings = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| format_err(&manifest_path, format!("line {}: bad {what}", n + 1));
        if f.len() != 5 {
            return Err(bad("field count"));
        }
        let entry = ManifestEntry {
            recording_id: f[0].to_string(),
            class: FlowClass::parse(f[1]).ok_or_else(|| bad("class"))?,
            split: Split::parse(f[2]).ok_or_else(|| bad("split"))?,
            mixture: (!f[3].is_empty()).then(|| f[3].to_string()),
            seed: f[4].parse().map_err(|_| bad("seed"))?,
        };
        let rec = read_recording_csv(&dir.join("recordings").join(format!("{}.csv", entry.recording_id)))?;
        if rec.scenario.label != entry.class {
            return Err(bad("class (disagrees with recording sidecar)"));
        }
        recordings.push(rec);
        manifest.push(entry);
    }
    Ok(DatasetBundle { config: header.config, master_seed: header.master_seed, recordings, manifest })
}
