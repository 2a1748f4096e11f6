//! Wavelength channels, absorption spectra and Beer–Lambert transmission.
//!
//! Units are fixed across the crate: concentration in g/L, path length in mm,
//! intensity in detector counts, and absorption coefficients in 1/(g/L·mm).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SpectralFrame;

/// Number of physical sensor channels.
pub const NUM_CHANNELS: usize = 12;

/// Channel centers in sensor order. Note the 550/555 pair.
pub const CHANNEL_CENTERS_NM: [f64; NUM_CHANNELS] =
    [405.0, 425.0, 450.0, 475.0, 515.0, 550.0, 555.0, 600.0, 640.0, 690.0, 745.0, 855.0];

/// Default effective optical path across the sensing gap.
pub const DEFAULT_PATH_LENGTH_MM: f64 = 3.0;

/// Strong-absorption channel used for ratio validation (405 nm).
pub const RATIO_STRONG_CHANNEL: usize = 1;
/// Weak-absorption channel used for ratio validation (855 nm).
pub const RATIO_WEAK_CHANNEL: usize = 12;

const HEMOGLOBIN_TABLE: &str = include_str!("../data/hemoglobin.txt");

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("concentration must be non-negative, got {0}")]
    NegativeConcentration(f64),
    #[error("path length must be positive, got {0}")]
    NonPositivePath(f64),
    #[error("absorption coefficient must be non-negative, got {0}")]
    NegativeAbsorption(f64),
    #[error("incident intensity must be positive, got {0}")]
    NonPositiveIncident(f64),
    #[error("channel index {0} out of range")]
    BadChannel(usize),
    #[error("channels {0} and {1} belong to different illumination states")]
    CrossState(usize, usize),
    #[error("channel {0} reads zero; ratio undefined")]
    ZeroDenominator(usize),
    #[error("series needs at least two values, got {0}")]
    SeriesTooShort(usize),
    #[error("spectrum table line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("spectrum table is missing channel {0}")]
    MissingChannel(usize),
    #[error("reading spectrum file: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, SpectralError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    /// 1-based sensor channel index.
    pub index: usize,
    pub center_nm: f64,
}

/// The twelve spectral channels of the sensor, in sensor order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBank {
    channels: Vec<Channel>,
}

impl ChannelBank {
    pub fn standard() -> Self {
        let channels =
            CHANNEL_CENTERS_NM.iter().enumerate().map(|(i, &center_nm)| Channel { index: i + 1, center_nm }).collect();
        Self { channels }
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn center_nm(&self, index: usize) -> Result<f64> {
        self.channels.get(index.wrapping_sub(1)).map(|c| c.center_nm).ok_or(SpectralError::BadChannel(index))
    }
}

impl Default for ChannelBank {
    fn default() -> Self {
        Self::standard()
    }
}

/// Absorption coefficients of one substance at the twelve channel centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionSpectrum {
    pub substance_id: String,
    /// `mu[k]` is the coefficient for channel `k + 1`.
    pub mu: [f64; NUM_CHANNELS],
}

impl AbsorptionSpectrum {
    pub fn new(substance_id: impl Into<String>, mu: [f64; NUM_CHANNELS]) -> Result<Self> {
        if let Some(&bad) = mu.iter().find(|m| !(**m >= 0.0)) {
            return Err(SpectralError::NegativeAbsorption(bad));
        }
        Ok(Self { substance_id: substance_id.into(), mu })
    }

    /// A substance that absorbs nothing.
    pub fn transparent(substance_id: impl Into<String>) -> Self {
        Self { substance_id: substance_id.into(), mu: [0.0; NUM_CHANNELS] }
    }

    /// The shipped effective hemoglobin spectrum.
    pub fn hemoglobin() -> Self {
        Self::parse("hemoglobin", HEMOGLOBIN_TABLE).expect("bundled hemoglobin table is valid")
    }

    /// Parses a `channel_index, center_nm, mu` table. Blank lines and `#`
    /// comments are skipped; every channel must appear exactly once and its
    /// center must match the standard channel bank.
    pub fn parse(substance_id: impl Into<String>, text: &str) -> Result<Self> {
        let mut mu = [f64::NAN; NUM_CHANNELS];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| SpectralError::Parse { line: lineno + 1, msg };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 fields, got {}", fields.len())));
            }
            let index: usize = fields[0].parse().map_err(|e| err(format!("channel index: {e}")))?;
            let center: f64 = fields[1].parse().map_err(|e| err(format!("center_nm: {e}")))?;
            let value: f64 = fields[2].parse().map_err(|e| err(format!("mu: {e}")))?;
            if !(1..=NUM_CHANNELS).contains(&index) {
                return Err(err(format!("channel index {index} out of range 1..=12")));
            }
            if (center - CHANNEL_CENTERS_NM[index - 1]).abs() > 1e-9 {
                return Err(err(format!(
                    "channel {index} center {center} nm does not match {} nm",
                    CHANNEL_CENTERS_NM[index - 1]
                )));
            }
            if !mu[index - 1].is_nan() {
                return Err(err(format!("duplicate channel {index}")));
            }
            if !(value >= 0.0) || !value.is_finite() {
                return Err(err(format!("mu must be finite and non-negative, got {value}")));
            }
            mu[index - 1] = value;
        }
        if let Some(k) = mu.iter().position(|m| m.is_nan()) {
            return Err(SpectralError::MissingChannel(k + 1));
        }
        Ok(Self { substance_id: substance_id.into(), mu })
    }

    pub fn load(substance_id: impl Into<String>, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SpectralError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(substance_id, &text)
    }

    /// Coefficient for a 1-based physical channel.
    pub fn at(&self, channel: usize) -> Result<f64> {
        self.mu.get(channel.wrapping_sub(1)).copied().ok_or(SpectralError::BadChannel(channel))
    }
}

/// Optical geometry plus the unattenuated intensity for each of the 24
/// frame channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalPath {
    pub path_length_mm: f64,
    pub incident: [f64; 2 * NUM_CHANNELS],
}

impl OpticalPath {
    pub fn new(path_length_mm: f64, incident: [f64; 2 * NUM_CHANNELS]) -> Result<Self> {
        if !(path_length_mm > 0.0) {
            return Err(SpectralError::NonPositivePath(path_length_mm));
        }
        if let Some(&bad) = incident.iter().find(|v| !(**v > 0.0)) {
            return Err(SpectralError::NonPositiveIncident(bad));
        }
        Ok(Self { path_length_mm, incident })
    }
}

/// Parameters of the two-wavelength ratio model `C · exp(−Δμ·c·L)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioModelParams {
    /// Incident-intensity ratio `I0(λ1) / I0(λ2)`.
    pub incident_ratio: f64,
    /// `μ(λ1) − μ(λ2)`.
    pub delta_mu: f64,
    pub path_length_mm: f64,
}

impl RatioModelParams {
    pub fn new(incident_ratio: f64, delta_mu: f64, path_length_mm: f64) -> Result<Self> {
        if !(incident_ratio > 0.0) {
            return Err(SpectralError::NonPositiveIncident(incident_ratio));
        }
        if !(path_length_mm > 0.0) {
            return Err(SpectralError::NonPositivePath(path_length_mm));
        }
        Ok(Self { incident_ratio, delta_mu, path_length_mm })
    }

    /// Builds the model for a pair of frame channels (1..=24).
    pub fn for_channels(
        spectrum: &AbsorptionSpectrum,
        optics: &OpticalPath,
        strong: usize,
        weak: usize,
    ) -> Result<Self> {
        let i0 = |k: usize| optics.incident.get(k.wrapping_sub(1)).copied().ok_or(SpectralError::BadChannel(k));
        let c = i0(strong)? / i0(weak)?;
        let dmu = spectrum.at(physical_channel(strong)?)? - spectrum.at(physical_channel(weak)?)?;
        Self::new(c, dmu, optics.path_length_mm)
    }
}

/// Maps a frame channel (1..=24) to its physical sensor channel (1..=12).
pub fn physical_channel(frame_channel: usize) -> Result<usize> {
    match frame_channel {
        1..=24 => Ok((frame_channel - 1) % NUM_CHANNELS + 1),
        _ => Err(SpectralError::BadChannel(frame_channel)),
    }
}

/// Illumination state of a frame channel: 0 for channels 1–12, 1 for 13–24.
pub fn illumination_state(frame_channel: usize) -> Result<usize> {
    match frame_channel {
        1..=24 => Ok((frame_channel - 1) / NUM_CHANNELS),
        _ => Err(SpectralError::BadChannel(frame_channel)),
    }
}

/// Beer–Lambert transmitted intensity `I0·exp(−μ·c·L)`.
pub fn transmit(incident: f64, mu: f64, concentration: f64, path_length_mm: f64) -> Result<f64> {
    if !(incident > 0.0) {
        return Err(SpectralError::NonPositiveIncident(incident));
    }
    if !(mu >= 0.0) {
        return Err(SpectralError::NegativeAbsorption(mu));
    }
    if !(concentration >= 0.0) {
        return Err(SpectralError::NegativeConcentration(concentration));
    }
    if !(path_length_mm > 0.0) {
        return Err(SpectralError::NonPositivePath(path_length_mm));
    }
    Ok(incident * (-mu * concentration * path_length_mm).exp())
}

/// Ratio of two frame channels (1..=24) acquired in the same illumination state.
pub fn intensity_ratio(frame: &SpectralFrame, i: usize, j: usize) -> Result<f64> {
    if illumination_state(i)? != illumination_state(j)? {
        return Err(SpectralError::CrossState(i, j));
    }
    let den = frame.values[j - 1];
    if den == 0.0 {
        return Err(SpectralError::ZeroDenominator(j));
    }
    Ok(frame.values[i - 1] / den)
}

/// Predicted intensity ratio at concentration `c`.
pub fn ratio_predict(params: &RatioModelParams, concentration: f64) -> Result<f64> {
    if !(concentration >= 0.0) {
        return Err(SpectralError::NegativeConcentration(concentration));
    }
    Ok(params.incident_ratio * (-params.delta_mu * concentration * params.path_length_mm).exp())
}

/// Outcome of [`check_monotone_decreasing`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonotoneCheck {
    pub decreasing: bool,
    /// Index of the first value that failed to decrease.
    pub first_violation: Option<usize>,
}

/// Checks that every value is below its predecessor by more than `-tolerance`
/// (`tolerance = 0` demands a strict decrease).
pub fn check_monotone_decreasing(series: &[f64], tolerance: f64) -> Result<MonotoneCheck> {
    if series.len() < 2 {
        return Err(SpectralError::SeriesTooShort(series.len()));
    }
    let first_violation = series.windows(2).position(|w| !(w[1] - w[0] < tolerance)).map(|p| p + 1);
    Ok(MonotoneCheck { decreasing: first_violation.is_none(), first_violation })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// exp(x) by Taylor series with argument halving, independent of `f64::exp`.
    fn exp_series(x: f64) -> f64 {
        let mut k = 0;
        let mut y = x;
        while y.abs() > 0.01 {
            y /= 2.0;
            k += 1;
        }
        let (mut term, mut sum) = (1.0f64, 1.0f64);
        for n in 1..30 {
            term *= y / n as f64;
            sum += term;
        }
        for _ in 0..k {
            sum *= sum;
        }
        sum
    }

    #[test]
    fn channel_bank_matches_sensor_order() {
        let bank = ChannelBank::standard();
        assert_eq!(bank.len(), 12);
        let centers: Vec<f64> = bank.channels().iter().map(|c| c.center_nm).collect();
        assert_eq!(centers, vec![405., 425., 450., 475., 515., 550., 555., 600., 640., 690., 745., 855.]);
        assert!(centers.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(bank.center_nm(12).unwrap(), 855.0);
        assert!(bank.center_nm(0).is_err());
    }

    #[test]
    fn transmit_examples() {
        assert_eq!(transmit(1000.0, 0.7, 0.0, 3.0).unwrap(), 1000.0);
        let mu = std::f64::consts::LN_2 / (2.0 * 3.0);
        assert!((transmit(1000.0, mu, 2.0, 3.0).unwrap() - 500.0).abs() < 1e-9);
        let oracle = 1000.0 * exp_series(-0.3);
        assert!((oracle - 740.818_220_681_717_9).abs() < 1e-9);
        let got = transmit(1000.0, 0.05, 2.0, 3.0).unwrap();
        assert!((got - oracle).abs() / oracle < 1e-12);
    }

    #[test]
    fn transmit_rejects_bad_inputs() {
        assert_eq!(transmit(1000.0, 0.1, -1.0, 3.0), Err(SpectralError::NegativeConcentration(-1.0)));
        assert_eq!(transmit(1000.0, 0.1, 1.0, 0.0), Err(SpectralError::NonPositivePath(0.0)));
        assert!(transmit(1000.0, -0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn ratio_predict_examples() {
        let p = RatioModelParams::new(1.2, 0.08, 3.0).unwrap();
        assert_eq!(ratio_predict(&p, 0.0).unwrap(), 1.2);
        let oracle = 1.2 * exp_series(-0.36);
        assert!((oracle - 0.837_211_6).abs() < 1e-6);
        assert!((ratio_predict(&p, 1.5).unwrap() - oracle).abs() / oracle < 1e-12);
        let flat = RatioModelParams::new(1.2, 0.0, 3.0).unwrap();
        for c in [0.0, 0.5, 10.0] {
            assert_eq!(ratio_predict(&flat, c).unwrap(), 1.2);
        }
    }

    #[test]
    fn ratio_of_frames() {
        let mut values = [100.0; 24];
        values[0] = 250.0;
        values[11] = 50.0;
        let f = SpectralFrame { timestamp_s: 0.0, values };
        assert_eq!(intensity_ratio(&f, 1, 1).unwrap(), 1.0);
        assert_eq!(intensity_ratio(&f, 1, 12).unwrap(), 5.0);
        assert_eq!(intensity_ratio(&f, 1, 13), Err(SpectralError::CrossState(1, 13)));
        values[11] = 0.0;
        let f = SpectralFrame { timestamp_s: 0.0, values };
        assert_eq!(intensity_ratio(&f, 1, 12), Err(SpectralError::ZeroDenominator(12)));
        assert!(intensity_ratio(&f, 0, 1).is_err());
    }

    #[test]
    fn monotone_check_examples() {
        let ok = check_monotone_decreasing(&[5., 4., 3., 2.], 0.0).unwrap();
        assert!(ok.decreasing);
        let bad = check_monotone_decreasing(&[5., 4., 4.1, 2.], 0.0).unwrap();
        assert_eq!(bad, MonotoneCheck { decreasing: false, first_violation: Some(2) });
        assert!(check_monotone_decreasing(&[5., 4., 4.1, 2.], 0.2).unwrap().decreasing);
        assert!(!check_monotone_decreasing(&[1., 1.], 0.0).unwrap().decreasing);
        assert_eq!(check_monotone_decreasing(&[1.0], 0.0), Err(SpectralError::SeriesTooShort(1)));
        assert!(check_monotone_decreasing(&[], 0.0).is_err());
    }

    #[test]
    fn hemoglobin_table_ordering() {
        let hb = AbsorptionSpectrum::hemoglobin();
        let mu = |nm: f64| hb.mu[CHANNEL_CENTERS_NM.iter().position(|&c| c == nm).unwrap()];
        assert!(hb.mu.iter().all(|&m| m >= 0.0));
        assert!(mu(405.) > mu(855.));
        for q_band in [550., 555.] {
            assert!(mu(405.) > mu(q_band));
            assert!(mu(q_band) > mu(690.));
        }
        assert!(mu(690.) > mu(855.));
    }

    #[test]
    fn parser_rejects_missing_and_malformed_rows() {
        let full: String =
            CHANNEL_CENTERS_NM.iter().enumerate().map(|(i, c)| format!("{}, {}, 0.1\n", i + 1, c)).collect();
        assert!(AbsorptionSpectrum::parse("x", &full).is_ok());
        let missing: String = full.lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert_eq!(AbsorptionSpectrum::parse("x", &missing), Err(SpectralError::MissingChannel(1)));
        let dup = format!("{full}1, 405, 0.2\n");
        assert!(matches!(AbsorptionSpectrum::parse("x", &dup), Err(SpectralError::Parse { .. })));
        let wrong_center = full.replacen("1, 405,", "1, 406,", 1);
        assert!(AbsorptionSpectrum::parse("x", &wrong_center).is_err());
        let negative = full.replacen("0.1", "-0.1", 1);
        assert!(AbsorptionSpectrum::parse("x", &negative).is_err());
        let with_comments = format!("# header\n\n{}", full.replace('\n', " # note\n"));
        assert!(AbsorptionSpectrum::parse("x", &with_comments).is_ok());
    }

    #[test]
    fn channel_state_mapping() {
        assert_eq!(physical_channel(13).unwrap(), 1);
        assert_eq!(physical_channel(24).unwrap(), 12);
        assert_eq!(illumination_state(12).unwrap(), 0);
        assert_eq!(illumination_state(13).unwrap(), 1);
        assert!(physical_channel(25).is_err());
    }
}
