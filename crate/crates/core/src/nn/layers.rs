//! Layer kernels. The public functions take [`Tensor`]s and check shapes; the
//! `pub(crate)` slice kernels are what the model's hot loops call.

use super::{NnError, Result, Tensor};

/// 3×3 convolution, stride 1, zero padding 1. `weight` is `C_out×C_in×3×3`.
pub fn conv2d_3x3_pad1(input: &Tensor, weight: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let [c_in, h, w] = input.dims3();
    let &[c_out, wc_in, kh, kw] = weight.shape() else {
        return Err(NnError::Shape(format!("conv weight must be 4-D, got {:?}", weight.shape())));
    };
    if (kh, kw) != (3, 3) {
        return Err(NnError::Shape(format!("kernel {kh}×{kw} is not 3×3")));
    }
    if wc_in != c_in {
        return Err(NnError::Shape(format!("input has {c_in} channels, weights expect {wc_in}")));
    }
    if bias.len() != c_out {
        return Err(NnError::Shape(format!("bias length {} != {c_out}", bias.len())));
    }
    if h == 0 || w == 0 {
        return Err(NnError::Shape("empty spatial input".into()));
    }
    let mut out = vec![0.0; c_out * h * w];
    conv_forward(input.data(), c_in, h, w, weight.data(), bias, c_out, &mut out);
    Tensor::new(&[c_out, h, w], out)
}

pub(crate) fn conv_forward(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    c_out: usize,
    out: &mut [f64],
) {
    for o in 0..c_out {
        for y in 0..h {
            for x in 0..w {
                let mut acc = bias[o];
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
                            acc += weight[((o * c_in + i) * 3 + ky) * 3 + kx] * input[(i * h + iy - 1) * w + ix - 1];
                        }
                    }
                }
                out[(o * h + y) * w + x] = acc;
            }
        }
    }
}

/// Accumulates weight and bias gradients, and optionally the input gradient.
pub(crate) fn conv_backward(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    c_out: usize,
    d_out: &[f64],
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    mut d_input: Option<&mut [f64]>,
) {
    for o in 0..c_out {
        for y in 0..h {
            for x in 0..w {
                let g = d_out[(o * h + y) * w + x];
                if g == 0.0 {
                    continue;
                }
                d_bias[o] += g;
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
                            let wi = ((o * c_in + i) * 3 + ky) * 3 + kx;
                            let xi = (i * h + iy - 1) * w + ix - 1;
                            d_weight[wi] += g * input[xi];
                            if let Some(dx) = d_input.as_deref_mut() {
                                dx[xi] += g * weight[wi];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Result of 2×2 max pooling plus the flat input index each output came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxPool {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// Output extent of one pooled axis: floor(n/2), except that an axis of
/// length 1 is kept as a single truncated block.
pub(crate) fn pooled_len(n: usize) -> usize {
    if n >= 2 {
        n / 2
    } else {
        n
    }
}

/// 2×2 max pooling with stride 2 and floor semantics (3×12 → 1×6).
/// Ties resolve to the first element in row-major order.
pub fn maxpool2x2(input: &Tensor) -> Result<MaxPool> {
    let [c, h, w] = input.dims3();
    if c == 0 || h == 0 || w == 0 {
        return Err(NnError::Shape("empty pooling input".into()));
    }
    if h < 2 && w < 2 {
        return Err(NnError::Shape(format!("pooling needs H ≥ 2 or W ≥ 2, got {h}×{w}")));
    }
    let (oh, ow) = (pooled_len(h), pooled_len(w));
    let mut out = vec![0.0; c * oh * ow];
    let mut idx = vec![0; c * oh * ow];
    pool_forward(input.data(), c, h, w, &mut out, &mut idx);
    Ok(MaxPool { output: Tensor::new(&[c, oh, ow], out)?, argmax: idx })
}

pub(crate) fn pool_forward(input: &[f64], c: usize, h: usize, w: usize, out: &mut [f64], idx: &mut [usize]) {
    let (oh, ow) = (pooled_len(h), pooled_len(w));
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for y in 2 * oy..(2 * oy + 2).min(h) {
                    for x in 2 * ox..(2 * ox + 2).min(w) {
                        let i = (ch * h + y) * w + x;
                        if input[i] > best {
                            best = input[i];
                            best_i = i;
                        }
                    }
                }
                let o = (ch * oh + oy) * ow + ox;
                out[o] = best;
                idx[o] = best_i;
            }
        }
    }
}

pub fn relu(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Fully connected layer; `weight` is `out × in`, row-major.
pub fn dense(input: &[f64], weight: &Tensor, bias: &[f64]) -> Result<Vec<f64>> {
    let &[n_out, n_in] = weight.shape() else {
        return Err(NnError::Shape(format!("dense weight must be 2-D, got {:?}", weight.shape())));
    };
    if input.len() != n_in || bias.len() != n_out {
        return Err(NnError::Shape(format!("dense {n_in}→{n_out} got input {} bias {}", input.len(), bias.len())));
    }
    let mut out = vec![0.0; n_out];
    dense_forward(input, weight.data(), bias, &mut out);
    Ok(out)
}

pub(crate) fn dense_forward(input: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64]) {
    let n_in = input.len();
    for (o, y) in out.iter_mut().enumerate() {
        let row = &weight[o * n_in..(o + 1) * n_in];
        *y = bias[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
