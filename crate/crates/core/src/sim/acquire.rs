use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tank::concentration_at;
use super::types::*;
use super::{Result, SimError};
use crate::spectral::{AbsorptionSpectrum, OpticalPath, DEFAULT_PATH_LENGTH_MM, NUM_CHANNELS};

pub const MEDIUM_WATER: &str = "water";
pub const MEDIUM_SGF: &str = "sgf";

/// Unattenuated detector counts per frame channel.
///
/// State A drives the violet, green and NIR LEDs, so the blue-cyan and red
/// channels only see LED tails. State B is a phosphor white LED with little
/// violet or NIR output.
const INCIDENT_COUNTS: [f64; 24] = [
    // state A: 405 .. 855 nm
    42000.0, 18000.0, 3500.0, 2500.0, 30000.0, 36000.0, 35000.0, 6000.0, 2200.0, 2000.0, 4500.0, 40000.0, //
    // state B
    5000.0, 9000.0, 45000.0, 30000.0, 26000.0, 40000.0, 40000.0, 38000.0, 22000.0, 9000.0, 3000.0, 1500.0,
];

pub fn default_optics() -> OpticalPath {
    OpticalPath::new(DEFAULT_PATH_LENGTH_MM, INCIDENT_COUNTS).expect("static optics are valid")
}

/// Static per-channel transmission of a named medium, before any jitter.
pub fn medium_background(medium: &str) -> [f64; FRAME_CHANNELS] {
    let per_channel: [f64; NUM_CHANNELS] = match medium {
        // slight turbidity and a faint yellow cast
        MEDIUM_SGF => [0.95, 0.955, 0.96, 0.965, 0.97, 0.972, 0.972, 0.975, 0.977, 0.978, 0.98, 0.98],
        _ => [0.99; NUM_CHANNELS],
    };
    let mut out = [0.0; FRAME_CHANNELS];
    for (k, v) in out.iter_mut().enumerate() {
        *v = per_channel[k % NUM_CHANNELS];
    }
    out
}

/// Spectra, optics and noise shared by every recording of a run.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub hemoglobin: AbsorptionSpectrum,
    pub mixtures: BTreeMap<String, AbsorptionSpectrum>,
    pub optics: OpticalPath,
    pub noise: NoiseModel,
}

macro_rules! bundled_mixtures {
    ($($name:literal),* $(,)?) => {
        [$(($name, include_str!(concat!("../../data/interference/", $name, ".txt")))),*]
    };
}

const BUNDLED_MIXTURES: [(&str, &str); 10] = bundled_mixtures!(
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
);

impl Simulator {
    /// Bundled spectra, default optics and the given noise model.
    pub fn new(noise: NoiseModel) -> Self {
        let mixtures = BUNDLED_MIXTURES
            .iter()
            .map(|(name, text)| {
                let s = AbsorptionSpectrum::parse(*name, text).expect("bundled mixture is valid");
                (name.to_string(), s)
            })
            .collect();
        Self { hemoglobin: AbsorptionSpectrum::hemoglobin(), mixtures, optics: default_optics(), noise }
    }

    pub fn noiseless() -> Self {
        Self::new(NoiseModel::disabled())
    }

    /// Hemoglobin and interference concentrations (g/L) at time `t_s`.
    pub fn concentrations(&self, scenario: &InfusionScenario, t_s: f64) -> Result<(f64, f64)> {
        let q = scenario.flow_rate_ml_min;
        let v0 = scenario.initial_volume_ml;
        Ok(match &scenario.infusate {
            Infusate::Blood { hb_conc_g_per_l } => (concentration_at(t_s, q, v0, *hb_conc_g_per_l)?, 0.0),
            Infusate::Interference { stock_conc_g_per_l, .. } => {
                (0.0, concentration_at(t_s, q, v0, *stock_conc_g_per_l)?)
            }
            Infusate::Nothing => {
                if t_s < 0.0 {
                    return Err(SimError::NegativeTime(t_s));
                }
                (0.0, 0.0)
            }
        })
    }

    /// Reads one two-state acquisition cycle at time `t_s`.
    pub fn acquire_frame<R: Rng + ?Sized>(
        &self,
        t_s: f64,
        scenario: &InfusionScenario,
        rng: &mut R,
    ) -> Result<SpectralFrame> {
        let (c_hb, c_mix) = self.concentrations(scenario, t_s)?;
        let mixture = match scenario.mixture() {
            Some(name) => Some(self.mixtures.get(name).ok_or_else(|| SimError::UnknownMixture(name.to_string()))?),
            None => None,
        };
        let path = self.optics.path_length_mm;
        // Source fluctuation is shared by every channel lit by the same LED state.
        let gain = [self.source_gain(rng), self.source_gain(rng)];
        let mut values = [0.0; FRAME_CHANNELS];
        for (k, v) in values.iter_mut().enumerate() {
            let phys = k % NUM_CHANNELS;
            let mut mu_c = self.hemoglobin.mu[phys] * c_hb;
            if let Some(m) = mixture {
                mu_c += m.mu[phys] * c_mix;
            }
            let clean = self.optics.incident[k] * scenario.background_transmission[k] * (-mu_c * path).exp();
            *v = self.apply_noise(clean * gain[k / NUM_CHANNELS], rng);
        }
        Ok(SpectralFrame { timestamp_s: t_s, values })
    }

    fn source_gain<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.noise.multiplicative_sigma > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            1.0 + self.noise.multiplicative_sigma * z
        } else {
            1.0
        }
    }

    fn apply_noise<R: Rng + ?Sized>(&self, clean: f64, rng: &mut R) -> f64 {
        let n = &self.noise;
        let mut v = clean;
        if n.additive_sigma > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            v += n.additive_sigma * z;
        }
        match n.adc_bits {
            Some(bits) => {
                let step = f64::from(1u32 << (16 - u32::from(bits)));
                ((v / step).round() * step).clamp(0.0, 65535.0)
            }
            None => v.clamp(0.0, 65535.0),
        }
    }

    /// Simulates a whole run; frames are taken at `i · sample_period_s`.
    pub fn run_recording(&self, id: &str, scenario: &InfusionScenario) -> Result<Recording> {
        scenario.validate()?;
        self.noise.validate()?;
        let n = scenario.num_samples();
        if n < WINDOW_STEPS {
            return Err(SimError::TooShort { got: n, need: WINDOW_STEPS });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
        let frames = (0..n)
            .map(|i| self.acquire_frame(i as f64 * scenario.sample_period_s, scenario, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Recording { id: id.to_string(), scenario: scenario.clone(), frames, schema_version: SCHEMA_VERSION })
    }
}
