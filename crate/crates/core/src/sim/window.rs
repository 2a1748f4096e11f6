use super::types::{Recording, Window, FRAME_CHANNELS};
use super::{Result, SimError};

/// Cuts a recording into `length`-frame windows every `stride` frames.
pub fn windowize(rec: &Recording, length: usize, stride: usize) -> Result<Vec<Window>> {
    if stride < 1 {
        return Err(SimError::BadStride);
    }
    let n = rec.frames.len();
    if length == 0 || n < length {
        return Err(SimError::TooShort { got: n, need: length.max(1) });
    }
    let mixture = rec.scenario.mixture().map(str::to_string);
    Ok((0..=(n - length) / stride)
        .map(|w| {
            let start = w * stride;
            let mut data = Vec::with_capacity(length * FRAME_CHANNELS);
            for f in &rec.frames[start..start + length] {
                data.extend_from_slice(&f.values);
            }
            Window {
                data,
                steps: length,
                label: rec.scenario.label,
                recording_id: rec.id.clone(),
                start,
                mixture: mixture.clone(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{FlowClass, InfusionScenario, Simulator};

    fn rec(duration: f64) -> Recording {
        let mut s = InfusionScenario::bleeding(FlowClass::Q05, 1);
        s.duration_s = duration;
        Simulator::noiseless().run_recording("r", &s).unwrap()
    }

    #[test]
    fn window_counts() {
        let r = rec(120.0);
        assert_eq!(windowize(&r, 6, 6).unwrap().len(), 20);
        assert_eq!(windowize(&r, 6, 1).unwrap().len(), 115);
        assert_eq!(windowize(&r, 6, 7).unwrap().len(), (120 - 6) / 7 + 1);
        assert_eq!(windowize(&rec(6.0), 6, 6).unwrap().len(), 1);
    }

    #[test]
    fn window_errors() {
        let r = rec(6.0);
        assert!(matches!(windowize(&r, 6, 0), Err(SimError::BadStride)));
        let mut short = r.clone();
        short.frames.truncate(5);
        assert!(matches!(windowize(&short, 6, 6), Err(SimError::TooShort { got: 5, need: 6 })));
    }

    #[test]
    fn window_layout_is_time_major() {
        let r = rec(30.0);
        let ws = windowize(&r, 6, 6).unwrap();
        let w = &ws[2];
        assert_eq!(w.start, 12);
        assert_eq!(w.label, FlowClass::Q05);
        assert_eq!(w.data.len(), 144);
        assert_eq!(w.get(3, 5), r.frames[15].values[5]);
    }
}
