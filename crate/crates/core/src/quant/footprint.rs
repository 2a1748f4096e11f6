use std::fmt::Write as _;

use serde::Serialize;

use crate::nn::{
    ParamTensor, CONV1_OUT, CONV2_OUT, FLAT_FEATURES, HIDDEN_UNITS, INPUT_H, INPUT_W, NUM_CLASSES, PARAM_COUNT,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerFootprint {
    pub name: &'static str,
    pub output_shape: Vec<usize>,
    pub params: usize,
    pub macs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FootprintReport {
    pub parameter_count: usize,
    /// 32-bit floats.
    pub float_weight_bytes: usize,
    /// One byte per parameter.
    pub int8_weight_bytes: usize,
    /// What the integer model actually stores: int8 weights plus int32 biases.
    pub int8_payload_bytes: usize,
    /// Per-tensor scale (f64) and zero point (i32) for weights and activations.
    pub quant_metadata_bytes: usize,
    /// Largest input+output activation pair live at once, in elements.
    pub peak_activation_elements: usize,
    pub peak_activation_bytes_float: usize,
    pub peak_activation_bytes_int8: usize,
    pub macs: usize,
    pub layers: Vec<LayerFootprint>,
}

/// Counts derived from the fixed layer shapes. Padding taps are counted as
/// MACs, as a straightforward kernel would execute them.
pub fn footprint_report() -> FootprintReport {
    use ParamTensor::*;
    let (h2, w2) = (INPUT_H / 2, INPUT_W / 2);
    let (h3, w3) = (h2 / 2, w2 / 2);
    let layers = vec![
        LayerFootprint {
            name: "conv1",
            output_shape: vec![CONV1_OUT, INPUT_H, INPUT_W],
            params: Conv1Weight.len() + Conv1Bias.len(),
            macs: INPUT_H * INPUT_W * 9 * CONV1_OUT,
        },
        LayerFootprint { name: "pool1", output_shape: vec![CONV1_OUT, h2, w2], params: 0, macs: 0 },
        LayerFootprint {
            name: "conv2",
            output_shape: vec![CONV2_OUT, h2, w2],
            params: Conv2Weight.len() + Conv2Bias.len(),
            macs: h2 * w2 * 9 * CONV1_OUT * CONV2_OUT,
        },
        LayerFootprint { name: "pool2", output_shape: vec![CONV2_OUT, h3, w3], params: 0, macs: 0 },
        LayerFootprint {
            name: "fc1",
            output_shape: vec![HIDDEN_UNITS],
            params: Fc1Weight.len() + Fc1Bias.len(),
            macs: FLAT_FEATURES * HIDDEN_UNITS,
        },
        LayerFootprint {
            name: "fc2",
            output_shape: vec![NUM_CLASSES],
            params: Fc2Weight.len() + Fc2Bias.len(),
            macs: HIDDEN_UNITS * NUM_CLASSES,
        },
    ];
    let mut prev = INPUT_H * INPUT_W;
    let mut peak = 0;
    for l in &layers {
        let out: usize = l.output_shape.iter().product();
        peak = peak.max(prev + out);
        prev = out;
    }
    let biases = Conv1Bias.len() + Conv2Bias.len() + Fc1Bias.len() + Fc2Bias.len();
    FootprintReport {
        parameter_count: PARAM_COUNT,
        float_weight_bytes: 4 * PARAM_COUNT,
        int8_weight_bytes: PARAM_COUNT,
        int8_payload_bytes: (PARAM_COUNT - biases) + 4 * biases,
        quant_metadata_bytes: (4 + 4) * 12,
        peak_activation_elements: peak,
        peak_activation_bytes_float: 4 * peak,
        peak_activation_bytes_int8: peak,
        macs: layers.iter().map(|l| l.macs).sum(),
        layers,
    }
}

impl FootprintReport {
    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<6} {:>12} {:>7} {:>7}", "layer", "output", "params", "MACs");
        for l in &self.layers {
            let shape = l.output_shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
            let _ = writeln!(s, "{:<6} {:>12} {:>7} {:>7}", l.name, shape, l.params, l.macs);
        }
        let _ = writeln!(s, "parameters          {}", self.parameter_count);
        let _ = writeln!(s, "MACs / inference    {}", self.macs);
        let _ = writeln!(s, "float32 weights     {} B", self.float_weight_bytes);
        let _ = writeln!(
            s,
            "int8 weights        {} B nominal, {} B stored (int32 biases) + {} B scales/zero points",
            self.int8_weight_bytes, self.int8_payload_bytes, self.quant_metadata_bytes
        );
        let _ = writeln!(
            s,
            "peak activations    {} values: {} B float32, {} B int8",
            self.peak_activation_elements, self.peak_activation_bytes_float, self.peak_activation_bytes_int8
        );
        s
    }
}
