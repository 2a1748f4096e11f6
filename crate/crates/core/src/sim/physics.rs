//! Noise-free ch1/ch12 ratio series for every flow level.

use std::fmt::Write as _;

use super::types::{FlowClass, InfusionScenario};
use super::{Result, Simulator};
use crate::spectral::{check_monotone_decreasing, intensity_ratio, RATIO_STRONG_CHANNEL, RATIO_WEAK_CHANNEL};

#[derive(Debug, Clone, PartialEq)]
pub struct RatioSeries {
    pub class: FlowClass,
    pub ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsCheck {
    pub times_s: Vec<f64>,
    /// One series per class, in class order (flow 0 first).
    pub series: Vec<RatioSeries>,
    /// Bleeding classes whose series failed to decrease strictly.
    pub not_decreasing: Vec<FlowClass>,
    pub blank_constant: bool,
    /// First time index (t > 0) where a higher flow did not give a lower ratio.
    pub order_violation: Option<usize>,
}

impl PhysicsCheck {
    pub fn passed(&self) -> bool {
        self.not_decreasing.is_empty() && self.blank_constant && self.order_violation.is_none()
    }

    /// `t_s` followed by one `q<rate>` column per flow class.
    pub fn csv(&self) -> String {
        let mut out = String::from("t_s");
        for s in &self.series {
            write!(out, ",q{}", s.class.label()).unwrap();
        }
        out.push('\n');
        for (i, t) in self.times_s.iter().enumerate() {
            write!(out, "{t}").unwrap();
            for s in &self.series {
                write!(out, ",{}", s.ratio[i]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Runs one noise-free recording per flow class and checks the ratio series.
pub fn physics_check(duration_s: f64, sample_period_s: f64) -> Result<PhysicsCheck> {
    let sim = Simulator::noiseless();
    let mut series = Vec::with_capacity(FlowClass::COUNT);
    let mut times_s = Vec::new();
    for class in FlowClass::ALL {
        let mut scenario = InfusionScenario::bleeding(class, 0);
        scenario.duration_s = duration_s;
        scenario.sample_period_s = sample_period_s;
        let rec = sim.run_recording(&format!("physics-{}", class.label()), &scenario)?;
        times_s = rec.frames.iter().map(|f| f.timestamp_s).collect();
        let ratio = rec
            .frames
            .iter()
            .map(|f| intensity_ratio(f, RATIO_STRONG_CHANNEL, RATIO_WEAK_CHANNEL))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        series.push(RatioSeries { class, ratio });
    }

    let mut not_decreasing = Vec::new();
    for s in series.iter().filter(|s| s.class.is_bleeding()) {
        if !check_monotone_decreasing(&s.ratio, 0.0)?.decreasing {
            not_decreasing.push(s.class);
        }
    }
    let blank = &series[0].ratio;
    let blank_constant = blank.iter().all(|r| *r == blank[0]);
    let order_violation = (1..times_s.len()).find(|&i| series.windows(2).any(|w| !(w[1].ratio[i] < w[0].ratio[i])));

    Ok(PhysicsCheck { times_s, series, not_decreasing, blank_constant, order_violation })
}
