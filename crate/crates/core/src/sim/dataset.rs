//! Labeled dataset generation with recording-level train/val/test splits.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::acquire::medium_background;
use super::types::*;
use super::window::windowize;
use super::{derive_seed, Result, SimError, Simulator, MEDIUM_SGF, MEDIUM_WATER};
use crate::Exec;

pub const DEFAULT_MIXTURES: [&str; 10] = [
    "tea",
    "coffee",
    "grape_juice",
    "cola",
    "kvass",
    "fresh_milk",
    "chocolate_milk",
    "beetroot",
    "tomato_sauce",
    "grapefruit_juice",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub recordings_per_class: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub duration_s: f64,
    pub sample_period_s: f64,
    pub blood_hb_g_per_l: f64,
    pub initial_volume_ml: f64,
    pub noise: NoiseModel,
    pub window_length: usize,
    pub window_stride: usize,
    /// Interference pump rate range, mL/min.
    pub interference_rate: [f64; 2],
    /// Interference stock concentration range, g/L.
    pub interference_stock: [f64; 2],
    /// Maximum fractional per-channel dimming applied to each recording's
    /// background (vessel and sensor-window variation).
    pub background_jitter: f64,
    pub mixtures: Vec<String>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            recordings_per_class: 40,
            train_fraction: 0.70,
            val_fraction: 0.15,
            test_fraction: 0.15,
            duration_s: 120.0,
            sample_period_s: 1.0,
            blood_hb_g_per_l: 150.0,
            initial_volume_ml: 250.0,
            noise: NoiseModel::default(),
            window_length: WINDOW_STEPS,
            window_stride: WINDOW_STEPS,
            interference_rate: [0.3, 0.9],
            interference_stock: [50.0, 150.0],
            background_jitter: 0.05,
            mixtures: DEFAULT_MIXTURES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.recordings_per_class == 0 {
            return bad("every class needs at least one recording");
        }
        let fr = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fr.iter().any(|f| !(*f >= 0.0)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("split fractions must be non-negative and sum to 1");
        }
        if self.mixtures.is_empty() {
            return bad("at least one interference mixture is required");
        }
        if self.window_stride < 1 {
            return Err(SimError::BadStride);
        }
        for r in [self.interference_rate, self.interference_stock] {
            if !(r[0] > 0.0 && r[1] >= r[0]) {
                return bad("interference ranges must be positive and ordered");
            }
        }
        if !(0.0..1.0).contains(&self.background_jitter) {
            return bad("background_jitter must lie in [0, 1)");
        }
        self.noise.validate()
    }

    /// Train/val/test recording counts for one class.
    pub fn split_counts(&self) -> [usize; 3] {
        let n = self.recordings_per_class;
        let train = (self.train_fraction * n as f64).round() as usize;
        let val = ((self.val_fraction * n as f64).round() as usize).min(n - train.min(n));
        let train = train.min(n);
        [train, val, n - train - val]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub recording_id: String,
    pub class: FlowClass,
    pub split: Split,
    pub mixture: Option<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub config: DatasetConfig,
    pub master_seed: u64,
    pub recordings: Vec<Recording>,
    pub manifest: Vec<ManifestEntry>,
}

impl DatasetBundle {
    pub fn recordings_in(&self, split: Split) -> impl Iterator<Item = &Recording> {
        self.recordings.iter().zip(&self.manifest).filter(move |(_, m)| m.split == split).map(|(r, _)| r)
    }

    /// Windows of every recording in `split`, in manifest order.
    pub fn windows(&self, split: Split) -> Result<Vec<Window>> {
        let mut out = Vec::new();
        for rec in self.recordings_in(split) {
            out.extend(windowize(rec, self.config.window_length, self.config.window_stride)?);
        }
        Ok(out)
    }
}

struct Plan {
    id: String,
    scenario: InfusionScenario,
    entry: ManifestEntry,
}

/// Generates every recording of the dataset. Output is a pure function of
/// `(config, master_seed)`; each recording draws from its own seed stream.
pub fn generate_dataset(config: &DatasetConfig, master_seed: u64, exec: Exec) -> Result<DatasetBundle> {
    config.validate()?;
    let sim = Simulator::new(config.noise);
    for m in &config.mixtures {
        if !sim.mixtures.contains_key(m) {
            return Err(SimError::UnknownMixture(m.clone()));
        }
    }
    let [n_train, n_val, _] = config.split_counts();
    let per_class = config.recordings_per_class;

    let mut plans = Vec::with_capacity(per_class * FlowClass::COUNT);
    for class in FlowClass::ALL {
        let mixture_order = if class.is_bleeding() {
            Vec::new()
        } else {
            // Whole shuffled rounds, so the leading (training) slots cover
            // every mixture before any repeats.
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master_seed, 0xA11C_E000));
            let mut order = Vec::with_capacity(per_class);
            while order.len() < per_class {
                let mut round: Vec<usize> = (0..config.mixtures.len()).collect();
                round.shuffle(&mut rng);
                order.extend(round);
            }
            order.truncate(per_class);
            order
        };
        for slot in 0..per_class {
            let index = plans.len();
            let seed = derive_seed(master_seed, index as u64);
            let split = if slot < n_train {
                Split::Train
            } else if slot < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            let mixture = mixture_order.get(slot).map(|&m| config.mixtures[m].clone());
            let scenario = plan_scenario(config, class, mixture.as_deref(), seed);
            let id = format!("rec_{index:04}");
            plans.push(Plan {
                entry: ManifestEntry { recording_id: id.clone(), class, split, mixture, seed },
                id,
                scenario,
            });
        }
    }

    let recordings =
        exec.map(&plans, |p| sim.run_recording(&p.id, &p.scenario)).into_iter().collect::<Result<Vec<_>>>()?;
    Ok(DatasetBundle {
        config: config.clone(),
        master_seed,
        recordings,
        manifest: plans.into_iter().map(|p| p.entry).collect(),
    })
}

fn plan_scenario(config: &DatasetConfig, class: FlowClass, mixture: Option<&str>, seed: u64) -> InfusionScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let (medium, flow, infusate) = match mixture {
        None => (MEDIUM_SGF, class.flow_rate(), Infusate::Blood { hb_conc_g_per_l: config.blood_hb_g_per_l }),
        Some(name) => {
            let [qlo, qhi] = config.interference_rate;
            let [slo, shi] = config.interference_stock;
            (
                MEDIUM_WATER,
                rng.random_range(qlo..=qhi),
                Infusate::Interference { mixture: name.to_string(), stock_conc_g_per_l: rng.random_range(slo..=shi) },
            )
        }
    };
    let mut background = medium_background(medium);
    if config.background_jitter > 0.0 {
        for b in background.iter_mut() {
            *b *= 1.0 - config.background_jitter * rng.random::<f64>();
        }
    }
    InfusionScenario {
        label: class,
        flow_rate_ml_min: flow,
        infusate,
        initial_volume_ml: config.initial_volume_ml,
        duration_s: config.duration_s,
        sample_period_s: config.sample_period_s,
        medium: medium.to_string(),
        background_transmission: background,
        rng_seed: seed,
    }
}
