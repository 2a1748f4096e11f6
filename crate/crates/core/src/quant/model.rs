use serde::Serialize;

use super::affine::{quantize_bias, snr_db, QuantParams, Requant};
use super::{QuantError, Result};
use crate::nn::{
    ModelParams, Normalizer, ParamTensor, CONV1_OUT, CONV2_OUT, FLAT_FEATURES, HIDDEN_UNITS, INPUT_H, INPUT_W,
    NUM_CLASSES,
};
use crate::sim::{FlowClass, Window};
use crate::Exec;

/// Quantization points for activations, in network order.
pub const ACTIVATION_NAMES: [&str; 4] = ["input", "conv1.relu", "conv2.relu", "fc1.relu"];
pub const LAYER_NAMES: [&str; 4] = ["conv1", "conv2", "fc1", "fc2"];

const H2: usize = INPUT_H / 2;
const W2: usize = INPUT_W / 2;

/// Activation quantization parameters plus the calibration range they came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActQuant {
    pub params: QuantParams,
    pub min: f64,
    pub max: f64,
}

/// One conv or dense layer in integer form.
#[derive(Debug, Clone, PartialEq)]
pub struct QLayer {
    pub weight: Vec<i8>,
    pub weight_params: QuantParams,
    /// Scale is `input_scale × weight_scale`, zero point 0.
    pub bias: Vec<i32>,
    /// Maps accumulators onto the next activation; absent on the output layer.
    pub requant: Option<Requant>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub normalizer: Normalizer,
    pub train_config_hash: String,
    /// Input, conv1, conv2 and fc1 activations.
    pub activations: [ActQuant; 4],
    /// conv1, conv2, fc1, fc2.
    pub layers: [QLayer; 4],
    /// Largest float/int8 logit deviation expected for inputs inside the
    /// calibrated input range; inputs outside it saturate.
    pub logit_error_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorReport {
    pub name: String,
    pub scale: f64,
    pub zero_point: i32,
    pub max_abs_error: f64,
    pub snr_db: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantReport {
    pub tensors: Vec<TensorReport>,
    pub activations: Vec<TensorReport>,
    pub calibration_windows: usize,
    pub max_calibration_logit_error: f64,
    pub logit_error_bound: f64,
    pub warnings: Vec<String>,
}

/// Integer activations of one inference.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QTrace {
    pub input: Vec<i8>,
    pub conv1: Vec<i8>,
    pub pool1: Vec<i8>,
    pub conv2: Vec<i8>,
    pub pool2: Vec<i8>,
    pub hidden: Vec<i8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QForward {
    pub trace: QTrace,
    /// Output-layer accumulators at scale `fc1 scale × fc2 weight scale`.
    pub accumulators: [i32; NUM_CLASSES],
    pub logits: [f64; NUM_CLASSES],
}

impl QForward {
    /// Top-1 class; ties go to the lower index.
    pub fn class_index(&self) -> usize {
        let mut best = 0;
        for (i, &a) in self.accumulators.iter().enumerate().skip(1) {
            if a > self.accumulators[best] {
                best = i;
            }
        }
        best
    }
}

struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn new() -> Self {
        Self { lo: f64::INFINITY, hi: f64::NEG_INFINITY }
    }

    fn add(&mut self, xs: &[f64]) {
        for &x in xs {
            self.lo = self.lo.min(x);
            self.hi = self.hi.max(x);
        }
    }

    fn merge(mut self, other: &Range) -> Self {
        self.lo = self.lo.min(other.lo);
        self.hi = self.hi.max(other.hi);
        self
    }
}

fn layer_tensors(l: usize) -> (ParamTensor, ParamTensor) {
    use ParamTensor::*;
    [(Conv1Weight, Conv1Bias), (Conv2Weight, Conv2Bias), (Fc1Weight, Fc1Bias), (Fc2Weight, Fc2Bias)][l]
}

/// Fan-in of one output of layer `l`.
fn layer_fan_in(l: usize) -> usize {
    [9, CONV1_OUT * 9, FLAT_FEATURES, HIDDEN_UNITS][l]
}

/// Worst-case accumulator magnitude of a layer: every input at distance 255
/// from its zero point, every weight product adding up.
fn accumulator_bound(layer: &QLayer, fan_in: usize) -> i64 {
    layer
        .bias
        .iter()
        .enumerate()
        .map(|(o, &b)| {
            let w: i64 = layer.weight[o * fan_in..(o + 1) * fan_in].iter().map(|&w| i64::from(w).abs()).sum();
            i64::from(b).abs() + 255 * w
        })
        .max()
        .unwrap_or(0)
}

/// Post-training quantization. `calibration` holds normalized 6×24 inputs.
pub fn quantize(
    model: &ModelParams,
    normalizer: &Normalizer,
    train_config_hash: &str,
    calibration: &[Vec<f64>],
    exec: Exec,
) -> Result<(QuantizedModel, QuantReport)> {
    if calibration.is_empty() {
        return Err(QuantError::EmptyCalibration);
    }
    let ranges = exec
        .map_chunks(calibration, 64, |chunk| -> Result<[Range; 4]> {
            let mut r = [Range::new(), Range::new(), Range::new(), Range::new()];
            for x in chunk {
                let fw = model.forward(x)?;
                r[0].add(x);
                r[1].add(&fw.conv1);
                r[2].add(&fw.conv2);
                r[3].add(&fw.hidden);
            }
            Ok(r)
        })
        .into_iter()
        .try_fold([Range::new(), Range::new(), Range::new(), Range::new()], |acc, r| -> Result<_> {
            let r = r?;
            let [a0, a1, a2, a3] = acc;
            Ok([a0.merge(&r[0]), a1.merge(&r[1]), a2.merge(&r[2]), a3.merge(&r[3])])
        })?;

    let mut warnings = Vec::new();
    let mut act_reports = Vec::new();
    let activations: [ActQuant; 4] = std::array::from_fn(|i| {
        let (params, degenerate) = QuantParams::asymmetric(ranges[i].lo, ranges[i].hi);
        if degenerate {
            warnings.push(format!("activation {} is constant over the calibration set", ACTIVATION_NAMES[i]));
        }
        act_reports.push(TensorReport {
            name: ACTIVATION_NAMES[i].into(),
            scale: params.scale,
            zero_point: params.zero_point,
            max_abs_error: params.scale / 2.0,
            snr_db: f64::NAN,
            degenerate,
        });
        ActQuant { params, min: ranges[i].lo, max: ranges[i].hi }
    });

    let mut tensors = Vec::new();
    let mut layers = Vec::with_capacity(4);
    for l in 0..4 {
        let (wt, bt) = layer_tensors(l);
        let w = model.tensor(wt);
        let (wp, degenerate) = QuantParams::symmetric(w);
        if degenerate {
            warnings.push(format!("{} is all zeros; scale floor applied", wt.name()));
        }
        let wq = wp.quantize_all(w);
        let back: Vec<f64> = wq.iter().map(|&q| wp.dequantize(q)).collect();
        tensors.push(TensorReport {
            name: wt.name().into(),
            scale: wp.scale,
            zero_point: 0,
            max_abs_error: w.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
            snr_db: snr_db(w, &back),
            degenerate,
        });
        let s_in = activations[l].params.scale;
        let bias_scale = s_in * wp.scale;
        let b = model.tensor(bt);
        let bq = quantize_bias(b, bias_scale)?;
        let bback: Vec<f64> = bq.iter().map(|&q| f64::from(q) * bias_scale).collect();
        tensors.push(TensorReport {
            name: bt.name().into(),
            scale: bias_scale,
            zero_point: 0,
            max_abs_error: b.iter().zip(&bback).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max),
            snr_db: snr_db(b, &bback),
            degenerate: false,
        });
        let requant =
            if l < 3 { Some(Requant::from_real(bias_scale / activations[l + 1].params.scale)?) } else { None };
        let layer = QLayer { weight: wq, weight_params: wp, bias: bq, requant };
        if accumulator_bound(&layer, layer_fan_in(l)) > i64::from(i32::MAX) {
            return Err(QuantError::Overflow(format!("{} accumulators could exceed int32", LAYER_NAMES[l])));
        }
        layers.push(layer);
    }
    let layers: [QLayer; 4] = layers.try_into().expect("four layers");

    let mut qmodel = QuantizedModel {
        normalizer: normalizer.clone(),
        train_config_hash: train_config_hash.to_string(),
        activations,
        layers,
        logit_error_bound: f64::INFINITY,
    };
    let max_dev = exec
        .map(calibration, |x| -> Result<f64> {
            let f = model.logits(x)?;
            let q = qmodel.qforward(x)?;
            Ok(f.iter().zip(&q.logits).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        })
        .into_iter()
        .try_fold(0.0f64, |m, d| d.map(|d| m.max(d)))?;
    // Twice the worst deviation seen in calibration, plus one output step.
    let out_step = qmodel.activations[3].params.scale * qmodel.layers[3].weight_params.scale;
    qmodel.logit_error_bound = 2.0 * max_dev + out_step;
    for w in &warnings {
        log::warn!("{w}");
    }
    let report = QuantReport {
        tensors,
        activations: act_reports,
        calibration_windows: calibration.len(),
        max_calibration_logit_error: max_dev,
        logit_error_bound: qmodel.logit_error_bound,
        warnings,
    };
    Ok((qmodel, report))
}

/// Saturating requantization with an optional ReLU floor at the zero point.
fn requantize(acc: i32, r: &Requant, zp: i32, relu: bool) -> i8 {
    let lo = if relu { i64::from(zp) } else { -128 };
    (r.apply(acc) + i64::from(zp)).clamp(lo, 127) as i8
}

#[allow(clippy::too_many_arguments)]
fn qconv(
    input: &[i8],
    zp_in: i32,
    c_in: usize,
    h: usize,
    w: usize,
    layer: &QLayer,
    c_out: usize,
    zp_out: i32,
) -> Vec<i8> {
    let r = layer.requant.as_ref().expect("hidden layers requantize");
    let mut out = vec![0i8; c_out * h * w];
    for o in 0..c_out {
        for y in 0..h {
            for x in 0..w {
                let mut acc = layer.bias[o];
                for i in 0..c_in {
                    for ky in 0..3 {
                        let iy = y + ky;
                        if iy < 1 || iy > h {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = x + kx;
                            if ix < 1 || ix > w {
                                continue;
                            }
                            let xv = i32::from(input[(i * h + iy - 1) * w + ix - 1]) - zp_in;
                            acc += xv * i32::from(layer.weight[((o * c_in + i) * 3 + ky) * 3 + kx]);
                        }
                    }
                }
                out[(o * h + y) * w + x] = requantize(acc, r, zp_out, true);
            }
        }
    }
    out
}

fn qpool(input: &[i8], c: usize, h: usize, w: usize) -> Vec<i8> {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0i8; c * ho * wo];
    for ch in 0..c {
        for y in 0..ho {
            for x in 0..wo {
                let base = ch * h * w;
                let m = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .map(|(dy, dx)| input[base + (2 * y + dy) * w + 2 * x + dx])
                    .max()
                    .expect("four taps");
                out[(ch * ho + y) * wo + x] = m;
            }
        }
    }
    out
}

fn qdense_acc(input: &[i8], zp_in: i32, layer: &QLayer) -> Vec<i32> {
    let n_in = input.len();
    layer
        .bias
        .iter()
        .enumerate()
        .map(|(o, &b)| {
            let row = &layer.weight[o * n_in..(o + 1) * n_in];
            row.iter().zip(input).fold(b, |acc, (&wv, &xv)| acc + (i32::from(xv) - zp_in) * i32::from(wv))
        })
        .collect()
}

impl QuantizedModel {
    pub fn validate(&self) -> Result<()> {
        self.normalizer.validate()?;
        for a in &self.activations {
            a.params.validate()?;
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let (wt, bt) = layer_tensors(l);
            if layer.weight.len() != wt.len() || layer.bias.len() != bt.len() {
                return Err(QuantError::Format(format!("{} has the wrong payload size", LAYER_NAMES[l])));
            }
            layer.weight_params.validate()?;
            if layer.weight_params.zero_point != 0 {
                return Err(QuantError::Format(format!("{} weights must be symmetric", LAYER_NAMES[l])));
            }
            match (&layer.requant, l < 3) {
                (Some(r), true) => r.validate()?,
                (None, false) => {}
                _ => return Err(QuantError::Format(format!("{} requantization mismatch", LAYER_NAMES[l]))),
            }
            if accumulator_bound(layer, layer_fan_in(l)) > i64::from(i32::MAX) {
                return Err(QuantError::Overflow(format!("{} accumulators could exceed int32", LAYER_NAMES[l])));
            }
        }
        Ok(())
    }

    /// Integer inference on one normalized 6×24 input.
    pub fn qforward(&self, input: &[f64]) -> Result<QForward> {
        if input.len() != INPUT_H * INPUT_W {
            return Err(QuantError::Shape(input.len()));
        }
        let zp = |i: usize| self.activations[i].params.zero_point;
        let q_in = self.activations[0].params.quantize_all(input);
        let conv1 = qconv(&q_in, zp(0), 1, INPUT_H, INPUT_W, &self.layers[0], CONV1_OUT, zp(1));
        let pool1 = qpool(&conv1, CONV1_OUT, INPUT_H, INPUT_W);
        let conv2 = qconv(&pool1, zp(1), CONV1_OUT, H2, W2, &self.layers[1], CONV2_OUT, zp(2));
        let pool2 = qpool(&conv2, CONV2_OUT, H2, W2);
        let r_fc1 = self.layers[2].requant.as_ref().expect("fc1 requantizes");
        let hidden: Vec<i8> =
            qdense_acc(&pool2, zp(2), &self.layers[2]).into_iter().map(|a| requantize(a, r_fc1, zp(3), true)).collect();
        let acc = qdense_acc(&hidden, zp(3), &self.layers[3]);
        let accumulators: [i32; NUM_CLASSES] = acc.try_into().expect("six outputs");
        let out_scale = self.activations[3].params.scale * self.layers[3].weight_params.scale;
        let logits = accumulators.map(|a| f64::from(a) * out_scale);
        Ok(QForward { trace: QTrace { input: q_in, conv1, pool1, conv2, pool2, hidden }, accumulators, logits })
    }

    /// True when every value lies inside the calibrated input range.
    pub fn in_calibrated_range(&self, input: &[f64]) -> bool {
        let a = &self.activations[0];
        input.iter().all(|&x| x >= a.min && x <= a.max)
    }

    /// Normalizes a raw window and classifies it on the integer path.
    pub fn classify(&self, window: &Window) -> Result<FlowClass> {
        Ok(FlowClass::ALL[self.qforward(&self.normalizer.normalize(window))?.class_index()])
    }
}

/// Top-1 agreement between the float and integer paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Agreement {
    pub windows: usize,
    pub agree: usize,
    pub fraction: f64,
    pub max_logit_error: f64,
    /// Integer-path accuracy against the window labels.
    pub int8_accuracy: f64,
    pub float_accuracy: f64,
}

pub fn agreement(model: &ModelParams, qmodel: &QuantizedModel, windows: &[Window], exec: Exec) -> Result<Agreement> {
    if windows.is_empty() {
        return Err(QuantError::EmptyCalibration);
    }
    let rows = exec
        .map(windows, |w| -> Result<(usize, usize, f64, usize)> {
            let x = qmodel.normalizer.normalize(w);
            let f = model.logits(&x)?;
            let q = qmodel.qforward(&x)?;
            let fi = crate::nn::argmax(&f);
            let dev = f.iter().zip(&q.logits).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Ok((fi, q.class_index(), dev, w.label.index()))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len();
    let agree = rows.iter().filter(|r| r.0 == r.1).count();
    Ok(Agreement {
        windows: n,
        agree,
        fraction: agree as f64 / n as f64,
        max_logit_error: rows.iter().map(|r| r.2).fold(0.0, f64::max),
        int8_accuracy: rows.iter().filter(|r| r.1 == r.3).count() as f64 / n as f64,
        float_accuracy: rows.iter().filter(|r| r.0 == r.3).count() as f64 / n as f64,
    })
}
