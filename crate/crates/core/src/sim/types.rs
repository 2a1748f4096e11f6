use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Result, SimError};

/// Values per acquisition cycle (12 channels × 2 illumination states).
pub const FRAME_CHANNELS: usize = 24;
/// Time steps per classifier window.
pub const WINDOW_STEPS: usize = 6;
/// Version tag written into every recording and dataset file.
pub const SCHEMA_VERSION: u32 = 1;

/// The six ordered classifier categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FlowClass {
    /// Non-blood interference, 0.0 mL/min of blood.
    Interference,
    Q01,
    Q03,
    Q05,
    Q07,
    Q09,
}

impl FlowClass {
    pub const ALL: [FlowClass; 6] =
        [FlowClass::Interference, FlowClass::Q01, FlowClass::Q03, FlowClass::Q05, FlowClass::Q07, FlowClass::Q09];
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Bleeding flow rate in mL/min (0 for interference).
    pub fn flow_rate(self) -> f64 {
        [0.0, 0.1, 0.3, 0.5, 0.7, 0.9][self.index()]
    }

    /// Bleeding class whose rate matches `q` within 1e-9.
    pub fn from_flow_rate(q: f64) -> Option<Self> {
        Self::ALL[1..].iter().copied().find(|c| (c.flow_rate() - q).abs() < 1e-9)
    }

    pub fn is_bleeding(self) -> bool {
        self != FlowClass::Interference
    }

    /// Consecutive bleeding levels, e.g. 0.3 and 0.5.
    pub fn is_adjacent(self, other: FlowClass) -> bool {
        self.is_bleeding() && other.is_bleeding() && self.index().abs_diff(other.index()) == 1
    }

    pub fn label(self) -> &'static str {
        ["0.0", "0.1", "0.3", "0.5", "0.7", "0.9"][self.index()]
    }

    pub fn parse(s: &str) -> Option<Self> {
        let q: f64 = s.trim().parse().ok()?;
        if q == 0.0 {
            Some(FlowClass::Interference)
        } else {
            Self::from_flow_rate(q)
        }
    }
}

impl fmt::Display for FlowClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// What the syringe pump delivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Infusate {
    Blood {
        hb_conc_g_per_l: f64,
    },
    Interference {
        mixture: String,
        stock_conc_g_per_l: f64,
    },
    /// Pump idle: a blank run of the medium.
    Nothing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfusionScenario {
    pub label: FlowClass,
    /// Pump rate in mL/min of the infusate.
    pub flow_rate_ml_min: f64,
    pub infusate: Infusate,
    pub initial_volume_ml: f64,
    pub duration_s: f64,
    pub sample_period_s: f64,
    pub medium: String,
    /// Static per-channel transmission of the medium and vessel, in (0, 1].
    pub background_transmission: [f64; FRAME_CHANNELS],
    pub rng_seed: u64,
}

impl InfusionScenario {
    /// A bleeding run in simulated gastric fluid with unit background.
    pub fn bleeding(class: FlowClass, rng_seed: u64) -> Self {
        Self {
            label: class,
            flow_rate_ml_min: class.flow_rate(),
            infusate: if class.is_bleeding() { Infusate::Blood { hb_conc_g_per_l: 150.0 } } else { Infusate::Nothing },
            initial_volume_ml: 250.0,
            duration_s: 120.0,
            sample_period_s: 1.0,
            medium: super::MEDIUM_SGF.to_string(),
            background_transmission: [1.0; FRAME_CHANNELS],
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if !(self.flow_rate_ml_min >= 0.0) {
            return bad(format!("flow rate {} < 0", self.flow_rate_ml_min));
        }
        if !(self.initial_volume_ml > 0.0) {
            return bad(format!("initial volume {} <= 0", self.initial_volume_ml));
        }
        if !(self.duration_s > 0.0) || !(self.sample_period_s > 0.0) {
            return bad("duration and sample period must be positive".into());
        }
        if let Some(b) = self.background_transmission.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
            return bad(format!("background transmission {b} outside (0, 1]"));
        }
        match (&self.infusate, self.label) {
            (Infusate::Blood { hb_conc_g_per_l }, label) => {
                if !(*hb_conc_g_per_l >= 0.0) {
                    return bad("negative blood hemoglobin concentration".into());
                }
                if label != FlowClass::from_flow_rate(self.flow_rate_ml_min).unwrap_or(label) || !label.is_bleeding() {
                    return bad(format!("label {label} inconsistent with blood flow {} mL/min", self.flow_rate_ml_min));
                }
            }
            (Infusate::Interference { stock_conc_g_per_l, .. }, label) => {
                if label != FlowClass::Interference {
                    return bad("interference infusion must carry the 0.0 label".into());
                }
                if !(*stock_conc_g_per_l >= 0.0) {
                    return bad("negative interference stock concentration".into());
                }
            }
            (Infusate::Nothing, label) => {
                if label != FlowClass::Interference {
                    return bad("a run without blood must carry the 0.0 label".into());
                }
            }
        }
        Ok(())
    }

    /// Number of acquisition cycles in the run.
    pub fn num_samples(&self) -> usize {
        (self.duration_s / self.sample_period_s + 1e-9).floor() as usize
    }

    pub fn mixture(&self) -> Option<&str> {
        match &self.infusate {
            Infusate::Interference { mixture, .. } => Some(mixture),
            _ => None,
        }
    }
}

/// Sensor noise surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Relative source-intensity noise, as a fraction. One draw per frame
    /// and illumination state, shared by that state's twelve channels.
    pub multiplicative_sigma: f64,
    /// Read noise in counts.
    pub additive_sigma: f64,
    /// ADC resolution; `None` models an ideal continuous detector.
    pub adc_bits: Option<u8>,
}

impl NoiseModel {
    pub fn disabled() -> Self {
        Self { multiplicative_sigma: 0.0, additive_sigma: 0.0, adc_bits: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.multiplicative_sigma >= 0.0) || !(self.additive_sigma >= 0.0) {
            return Err(SimError::InvalidConfig("noise sigmas must be non-negative".into()));
        }
        if let Some(bits) = self.adc_bits {
            if !(8..=16).contains(&bits) {
                return Err(SimError::InvalidConfig(format!("adc_bits {bits} outside 8..=16")));
            }
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.multiplicative_sigma == 0.0 && self.additive_sigma == 0.0
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { multiplicative_sigma: 0.01, additive_sigma: 5.0, adc_bits: Some(16) }
    }
}

/// One acquisition cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralFrame {
    pub timestamp_s: f64,
    /// ch1–ch12 from illumination state A, ch13–ch24 from state B.
    pub values: [f64; FRAME_CHANNELS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub id: String,
    pub scenario: InfusionScenario,
    pub frames: Vec<SpectralFrame>,
    pub schema_version: u32,
}

impl Recording {
    /// Values of one frame channel (1..=24) over time.
    pub fn channel_series(&self, channel: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f.values[channel - 1]).collect()
    }
}

/// A `steps × 24` time–spectral matrix, row-major (time rows, channel columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub data: Vec<f64>,
    pub steps: usize,
    pub label: FlowClass,
    pub recording_id: String,
    pub start: usize,
    pub mixture: Option<String>,
}

impl Window {
    pub fn get(&self, step: usize, channel: usize) -> f64 {
        self.data[step * FRAME_CHANNELS + channel]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_order_and_adjacency() {
        assert!(FlowClass::Interference < FlowClass::Q01);
        assert!(FlowClass::Q07 < FlowClass::Q09);
        assert!(FlowClass::Q03.is_adjacent(FlowClass::Q05));
        assert!(!FlowClass::Q03.is_adjacent(FlowClass::Q07));
        assert!(!FlowClass::Interference.is_adjacent(FlowClass::Q01));
        assert_eq!(FlowClass::parse("0.7"), Some(FlowClass::Q07));
        assert_eq!(FlowClass::parse("0"), Some(FlowClass::Interference));
        assert_eq!(FlowClass::parse("0.2"), None);
        for c in FlowClass::ALL {
            assert_eq!(FlowClass::from_index(c.index()), Some(c));
            assert_eq!(FlowClass::parse(c.label()), Some(c));
        }
    }

    #[test]
    fn scenario_label_consistency() {
        let mut s = InfusionScenario::bleeding(FlowClass::Q05, 1);
        assert!(s.validate().is_ok());
        s.label = FlowClass::Q07;
        assert!(s.validate().is_err());
        s.label = FlowClass::Interference;
        assert!(s.validate().is_err());
        let mut i = InfusionScenario::bleeding(FlowClass::Interference, 1);
        i.flow_rate_ml_min = 0.4;
        i.infusate = Infusate::Interference { mixture: "tea".into(), stock_conc_g_per_l: 80.0 };
        assert!(i.validate().is_ok());
        i.label = FlowClass::Q01;
        assert!(i.validate().is_err());
    }

    #[test]
    fn scenario_rejects_bad_numbers() {
        let base = InfusionScenario::bleeding(FlowClass::Q01, 0);
        let mut s = base.clone();
        s.initial_volume_ml = 0.0;
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.sample_period_s = 0.0;
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.background_transmission[3] = 1.2;
        assert!(s.validate().is_err());
        let mut s = base;
        s.flow_rate_ml_min = -0.1;
        assert!(s.validate().is_err());
    }

    #[test]
    fn noise_model_bounds() {
        assert!(NoiseModel::default().validate().is_ok());
        let n = NoiseModel { adc_bits: Some(20), ..NoiseModel::default() };
        assert!(n.validate().is_err());
        let n = NoiseModel { additive_sigma: -1.0, ..NoiseModel::default() };
        assert!(n.validate().is_err());
    }
}
