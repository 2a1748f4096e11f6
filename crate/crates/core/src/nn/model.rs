use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{conv_backward, conv_forward, dense_forward, pool_forward, pooled_len, softmax};
use super::{NnError, Result, Tensor};
use crate::Exec;

pub const INPUT_H: usize = 6;
pub const INPUT_W: usize = 24;
pub const NUM_CLASSES: usize = 6;
pub const HIDDEN_UNITS: usize = 64;
pub const CONV1_OUT: usize = 4;
pub const CONV2_OUT: usize = 8;

const H1: usize = INPUT_H;
const W1: usize = INPUT_W;
const H2: usize = H1 / 2; // 3
const W2: usize = W1 / 2; // 12
const H3: usize = H2 / 2; // 1 (floor)
const W3: usize = W2 / 2; // 6
pub const FLAT_FEATURES: usize = CONV2_OUT * H3 * W3;

/// Named parameter tensors, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamTensor {
    Conv1Weight,
    Conv1Bias,
    Conv2Weight,
    Conv2Bias,
    Fc1Weight,
    Fc1Bias,
    Fc2Weight,
    Fc2Bias,
}

impl ParamTensor {
    pub const ALL: [ParamTensor; 8] = [
        ParamTensor::Conv1Weight,
        ParamTensor::Conv1Bias,
        ParamTensor::Conv2Weight,
        ParamTensor::Conv2Bias,
        ParamTensor::Fc1Weight,
        ParamTensor::Fc1Bias,
        ParamTensor::Fc2Weight,
        ParamTensor::Fc2Bias,
    ];

    pub fn shape(self) -> &'static [usize] {
        match self {
            ParamTensor::Conv1Weight => &[CONV1_OUT, 1, 3, 3],
            ParamTensor::Conv1Bias => &[CONV1_OUT],
            ParamTensor::Conv2Weight => &[CONV2_OUT, CONV1_OUT, 3, 3],
            ParamTensor::Conv2Bias => &[CONV2_OUT],
            ParamTensor::Fc1Weight => &[HIDDEN_UNITS, FLAT_FEATURES],
            ParamTensor::Fc1Bias => &[HIDDEN_UNITS],
            ParamTensor::Fc2Weight => &[NUM_CLASSES, HIDDEN_UNITS],
            ParamTensor::Fc2Bias => &[NUM_CLASSES],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamTensor::Conv1Weight => "conv1.weight",
            ParamTensor::Conv1Bias => "conv1.bias",
            ParamTensor::Conv2Weight => "conv2.weight",
            ParamTensor::Conv2Bias => "conv2.bias",
            ParamTensor::Fc1Weight => "fc1.weight",
            ParamTensor::Fc1Bias => "fc1.bias",
            ParamTensor::Fc2Weight => "fc2.weight",
            ParamTensor::Fc2Bias => "fc2.bias",
        }
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        self.shape().iter().product()
    }

    /// Index range inside the flat parameter vector.
    pub fn range(self) -> std::ops::Range<usize> {
        let start: usize = Self::ALL.iter().take_while(|t| **t != self).map(|t| t.len()).sum();
        start..start + self.len()
    }

    /// Fan-in used for initialization.
    fn fan_in(self) -> usize {
        match self {
            ParamTensor::Conv1Weight | ParamTensor::Conv1Bias => 9,
            ParamTensor::Conv2Weight | ParamTensor::Conv2Bias => CONV1_OUT * 9,
            ParamTensor::Fc1Weight | ParamTensor::Fc1Bias => FLAT_FEATURES,
            ParamTensor::Fc2Weight | ParamTensor::Fc2Bias => HIDDEN_UNITS,
        }
    }
}

pub const PARAM_COUNT: usize = 36 + 4 + 288 + 8 + 3072 + 64 + 384 + 6;

/// All network parameters in one flat vector (see [`ParamTensor`] for layout).
/// Gradients use the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ModelParams {
    data: Vec<f64>,
}

impl TryFrom<Vec<f64>> for ModelParams {
    type Error = NnError;

    fn try_from(data: Vec<f64>) -> Result<Self> {
        Self::from_flat(data)
    }
}

impl From<ModelParams> for Vec<f64> {
    fn from(p: ModelParams) -> Self {
        p.data
    }
}

/// One classifier input: a normalized 6×24 window and its class index.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub input: &'a [f64],
    pub label: usize,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// conv1 after ReLU, 4×6×24.
    pub conv1: Vec<f64>,
    /// 4×3×12.
    pub pool1: Vec<f64>,
    pool1_idx: Vec<usize>,
    /// conv2 after ReLU, 8×3×12.
    pub conv2: Vec<f64>,
    /// 8×1×6, identical to the flattened 48-vector.
    pub pool2: Vec<f64>,
    pool2_idx: Vec<usize>,
    /// fc1 after ReLU, 64.
    pub hidden: Vec<f64>,
    pub logits: [f64; NUM_CLASSES],
}

impl Forward {
    /// Shapes of every captured stage, in pipeline order.
    pub fn shapes() -> [(&'static str, Vec<usize>); 7] {
        [
            ("conv1", vec![CONV1_OUT, H1, W1]),
            ("pool1", vec![CONV1_OUT, H2, W2]),
            ("conv2", vec![CONV2_OUT, H2, W2]),
            ("pool2", vec![CONV2_OUT, H3, W3]),
            ("flatten", vec![FLAT_FEATURES]),
            ("fc1", vec![HIDDEN_UNITS]),
            ("fc2", vec![NUM_CLASSES]),
        ]
    }

    pub fn stage(&self, name: &str) -> Option<Tensor> {
        let (_, shape) = Self::shapes().into_iter().find(|(n, _)| *n == name)?;
        let data = match name {
            "conv1" => self.conv1.clone(),
            "pool1" => self.pool1.clone(),
            "conv2" => self.conv2.clone(),
            "pool2" | "flatten" => self.pool2.clone(),
            "fc1" => self.hidden.clone(),
            _ => self.logits.to_vec(),
        };
        Tensor::new(&shape, data).ok()
    }
}

impl ModelParams {
    pub fn zeros() -> Self {
        Self { data: vec![0.0; PARAM_COUNT] }
    }

    pub fn from_flat(data: Vec<f64>) -> Result<Self> {
        if data.len() != PARAM_COUNT {
            return Err(NnError::Shape(format!("expected {PARAM_COUNT} parameters, got {}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NnError::Shape("parameters must be finite".into()));
        }
        Ok(Self { data })
    }

    /// Kaiming-uniform weights (`±sqrt(6 / fan_in)`), zero biases.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros();
        for t in [ParamTensor::Conv1Weight, ParamTensor::Conv2Weight, ParamTensor::Fc1Weight, ParamTensor::Fc2Weight] {
            let bound = (6.0 / t.fan_in() as f64).sqrt();
            p.tensor_mut(t).iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
        }
        p
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn tensor(&self, t: ParamTensor) -> &[f64] {
        &self.data[t.range()]
    }

    pub fn tensor_mut(&mut self, t: ParamTensor) -> &mut [f64] {
        &mut self.data[t.range()]
    }

    fn check_input(input: &[f64]) -> Result<()> {
        if input.len() != INPUT_H * INPUT_W {
            return Err(NnError::Shape(format!(
                "input must be 1×{INPUT_H}×{INPUT_W} ({} values), got {}",
                INPUT_H * INPUT_W,
                input.len()
            )));
        }
        Ok(())
    }

    /// Runs the network on one normalized 6×24 window.
    pub fn forward(&self, input: &[f64]) -> Result<Forward> {
        Self::check_input(input)?;
        use ParamTensor::*;
        let mut conv1 = vec![0.0; CONV1_OUT * H1 * W1];
        conv_forward(input, 1, H1, W1, self.tensor(Conv1Weight), self.tensor(Conv1Bias), CONV1_OUT, &mut conv1);
        conv1.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut pool1 = vec![0.0; CONV1_OUT * H2 * W2];
        let mut pool1_idx = vec![0; pool1.len()];
        pool_forward(&conv1, CONV1_OUT, H1, W1, &mut pool1, &mut pool1_idx);

        let mut conv2 = vec![0.0; CONV2_OUT * H2 * W2];
        conv_forward(
            &pool1,
            CONV1_OUT,
            H2,
            W2,
            self.tensor(Conv2Weight),
            self.tensor(Conv2Bias),
            CONV2_OUT,
            &mut conv2,
        );
        conv2.iter_mut().for_each(|v| *v = v.max(0.0));
        debug_assert_eq!((pooled_len(H2), pooled_len(W2)), (H3, W3));
        let mut pool2 = vec![0.0; FLAT_FEATURES];
        let mut pool2_idx = vec![0; FLAT_FEATURES];
        pool_forward(&conv2, CONV2_OUT, H2, W2, &mut pool2, &mut pool2_idx);

        let mut hidden = vec![0.0; HIDDEN_UNITS];
        dense_forward(&pool2, self.tensor(Fc1Weight), self.tensor(Fc1Bias), &mut hidden);
        hidden.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut logits = [0.0; NUM_CLASSES];
        dense_forward(&hidden, self.tensor(Fc2Weight), self.tensor(Fc2Bias), &mut logits);

        Ok(Forward { conv1, pool1, pool1_idx, conv2, pool2, pool2_idx, hidden, logits })
    }

    /// Logits only.
    pub fn logits(&self, input: &[f64]) -> Result<[f64; NUM_CLASSES]> {
        Ok(self.forward(input)?.logits)
    }

    /// Adds `scale ×` the gradient of the cross-entropy of one sample to `grad`.
    /// Returns the sample's loss and forward pass.
    fn accumulate_grad(&self, sample: Sample<'_>, scale: f64, grad: &mut ModelParams) -> Result<(f64, Forward)> {
        use ParamTensor::*;
        let fw = self.forward(sample.input)?;
        let probs = softmax(&fw.logits);
        let m = fw.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + fw.logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        let loss = lse - fw.logits[sample.label];

        let mut d_logits = [0.0; NUM_CLASSES];
        for (k, d) in d_logits.iter_mut().enumerate() {
            *d = scale * (probs[k] - if k == sample.label { 1.0 } else { 0.0 });
        }

        // fc2
        let w2 = self.tensor(Fc2Weight);
        let mut d_hidden = vec![0.0; HIDDEN_UNITS];
        {
            let gw = grad.tensor_mut(Fc2Weight);
            for (o, &g) in d_logits.iter().enumerate() {
                for h in 0..HIDDEN_UNITS {
                    gw[o * HIDDEN_UNITS + h] += g * fw.hidden[h];
                    d_hidden[h] += g * w2[o * HIDDEN_UNITS + h];
                }
            }
        }
        grad.tensor_mut(Fc2Bias).iter_mut().zip(&d_logits).for_each(|(b, g)| *b += g);
        for (d, &h) in d_hidden.iter_mut().zip(&fw.hidden) {
            if h <= 0.0 {
                *d = 0.0;
            }
        }

        // fc1
        let w1 = self.tensor(Fc1Weight);
        let mut d_flat = vec![0.0; FLAT_FEATURES];
        {
            let gw = grad.tensor_mut(Fc1Weight);
            for (h, &g) in d_hidden.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                for f in 0..FLAT_FEATURES {
                    gw[h * FLAT_FEATURES + f] += g * fw.pool2[f];
                    d_flat[f] += g * w1[h * FLAT_FEATURES + f];
                }
            }
        }
        grad.tensor_mut(Fc1Bias).iter_mut().zip(&d_hidden).for_each(|(b, g)| *b += g);

        // pool2 → conv2 (ReLU mask)
        let mut d_conv2 = vec![0.0; CONV2_OUT * H2 * W2];
        for (o, &src) in fw.pool2_idx.iter().enumerate() {
            if fw.conv2[src] > 0.0 {
                d_conv2[src] += d_flat[o];
            }
        }
        let mut d_pool1 = vec![0.0; CONV1_OUT * H2 * W2];
        {
            let (gw, gb) = split_pair(grad, Conv2Weight, Conv2Bias);
            conv_backward(
                &fw.pool1,
                CONV1_OUT,
                H2,
                W2,
                self.tensor(Conv2Weight),
                CONV2_OUT,
                &d_conv2,
                gw,
                gb,
                Some(&mut d_pool1),
            );
        }

        // pool1 → conv1 (ReLU mask)
        let mut d_conv1 = vec![0.0; CONV1_OUT * H1 * W1];
        for (o, &src) in fw.pool1_idx.iter().enumerate() {
            if fw.conv1[src] > 0.0 {
                d_conv1[src] += d_pool1[o];
            }
        }
        let (gw, gb) = split_pair(grad, Conv1Weight, Conv1Bias);
        conv_backward(sample.input, 1, H1, W1, self.tensor(Conv1Weight), CONV1_OUT, &d_conv1, gw, gb, None);

        Ok((loss, fw))
    }
}

/// Disjoint mutable views of a weight tensor and the bias stored right after it.
fn split_pair(p: &mut ModelParams, weight: ParamTensor, bias: ParamTensor) -> (&mut [f64], &mut [f64]) {
    let (wr, br) = (weight.range(), bias.range());
    debug_assert_eq!(wr.end, br.start);
    let (w, b) = p.data[wr.start..br.end].split_at_mut(wr.len());
    (w, b)
}

/// Samples per parallel lane. Fixed so the reduction tree never depends on
/// the thread count.
const LANE: usize = 8;

/// Batch summary returned alongside the gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    /// Mean softmax cross-entropy.
    pub loss: f64,
    /// Samples whose argmax matched the label.
    pub correct: usize,
}

/// Mean softmax cross-entropy over `batch` and its exact gradient.
///
/// Samples are processed in fixed lanes of 8; lane results are summed in
/// index order, so `Exec::Sequential` and `Exec::Parallel` give identical bits.
pub fn loss_and_grad(model: &ModelParams, batch: &[Sample<'_>], exec: Exec) -> Result<(BatchLoss, ModelParams)> {
    if batch.is_empty() {
        return Err(NnError::Empty("batch"));
    }
    if let Some(s) = batch.iter().find(|s| s.label >= NUM_CLASSES) {
        return Err(NnError::InvalidLabel(s.label));
    }
    let scale = 1.0 / batch.len() as f64;
    let lanes = exec.map_chunks(batch, LANE, |lane| -> Result<(f64, usize, ModelParams)> {
        let mut g = ModelParams::zeros();
        let mut loss = 0.0;
        let mut correct = 0;
        for s in lane {
            let (l, fw) = model.accumulate_grad(*s, scale, &mut g)?;
            loss += l;
            if super::eval::argmax(&fw.logits) == s.label {
                correct += 1;
            }
        }
        Ok((loss, correct, g))
    });
    let mut total = ModelParams::zeros();
    let mut loss = 0.0;
    let mut correct = 0;
    for lane in lanes {
        let (l, c, g) = lane?;
        loss += l;
        correct += c;
        total.data.iter_mut().zip(&g.data).for_each(|(a, b)| *a += b);
    }
    Ok((BatchLoss { loss: loss * scale, correct }, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_count() {
        assert_eq!(PARAM_COUNT, 3862);
        assert_eq!(FLAT_FEATURES, 48);
        assert_eq!(ParamTensor::ALL.iter().map(|t| t.len()).sum::<usize>(), PARAM_COUNT);
        assert_eq!(ParamTensor::Fc2Bias.range().end, PARAM_COUNT);
        assert_eq!(ParamTensor::Conv2Weight.range(), 40..328);
        assert!(ModelParams::from_flat(vec![0.0; 10]).is_err());
        assert!(ModelParams::from_flat(vec![f64::NAN; PARAM_COUNT]).is_err());
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = ModelParams::zeros();
        let x = vec![0.7; 144];
        let fw = m.forward(&x).unwrap();
        assert_eq!(fw.logits, [0.0; 6]);
        let batch = [Sample { input: &x, label: 3 }];
        let (bl, _) = loss_and_grad(&m, &batch, Exec::Sequential).unwrap();
        assert!((bl.loss - 6f64.ln()).abs() < 1e-12);
        assert!((bl.loss - 1.7918).abs() < 1e-4);
    }

    #[test]
    fn stage_shapes() {
        let m = ModelParams::init(3);
        let fw = m.forward(&vec![0.1; 144]).unwrap();
        let want: [(&str, &[usize]); 7] = [
            ("conv1", &[4, 6, 24]),
            ("pool1", &[4, 3, 12]),
            ("conv2", &[8, 3, 12]),
            ("pool2", &[8, 1, 6]),
            ("flatten", &[48]),
            ("fc1", &[64]),
            ("fc2", &[6]),
        ];
        for (name, shape) in want {
            assert_eq!(fw.stage(name).unwrap().shape(), shape, "{name}");
        }
        assert!(m.forward(&[0.0; 143]).is_err());
    }

    #[test]
    fn confident_logits_give_small_loss() {
        let mut m = ModelParams::zeros();
        m.tensor_mut(ParamTensor::Fc2Bias)[2] = 50.0;
        let x = vec![0.0; 144];
        let (bl, _) = loss_and_grad(&m, &[Sample { input: &x, label: 2 }], Exec::Sequential).unwrap();
        assert!(bl.loss < 1e-20 && bl.loss >= 0.0);
    }

    #[test]
    fn rejects_bad_batches() {
        let m = ModelParams::zeros();
        let x = vec![0.0; 144];
        assert!(matches!(loss_and_grad(&m, &[], Exec::Sequential), Err(NnError::Empty(_))));
        let bad = [Sample { input: &x, label: 6 }];
        assert!(matches!(loss_and_grad(&m, &bad, Exec::Sequential), Err(NnError::InvalidLabel(6))));
    }

    #[test]
    fn lanes_are_order_stable() {
        let m = ModelParams::init(5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xs: Vec<Vec<f64>> = (0..37).map(|_| (0..144).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let batch: Vec<Sample> = xs.iter().enumerate().map(|(i, x)| Sample { input: x, label: i % 6 }).collect();
        let (a, ga) = loss_and_grad(&m, &batch, Exec::Sequential).unwrap();
        let (b, gb) = loss_and_grad(&m, &batch, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga, gb);
    }
}
