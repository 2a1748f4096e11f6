//! Per-tensor affine quantization primitives.

use super::{QuantError, Result};

/// Smallest scale ever used; applied to all-zero tensors.
pub const MIN_SCALE: f64 = 1e-12;

/// `real = scale × (q − zero_point)`, with `q` in the int8 range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub scale: f64,
    pub zero_point: i32,
}

impl QuantParams {
    /// Symmetric int8 parameters for a weight tensor: zero point 0,
    /// `scale = max|w| / 127`. Returns `degenerate = true` when the tensor is
    /// all zeros and the scale floor was applied.
    pub fn symmetric(values: &[f64]) -> (Self, bool) {
        let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max > 0.0 {
            (Self { scale: max / 127.0, zero_point: 0 }, false)
        } else {
            (Self { scale: MIN_SCALE, zero_point: 0 }, true)
        }
    }

    /// Asymmetric int8 parameters covering `[min(lo, 0), max(hi, 0)]`, so
    /// real zero is always exactly representable.
    pub fn asymmetric(lo: f64, hi: f64) -> (Self, bool) {
        let lo = lo.min(0.0);
        let hi = hi.max(0.0);
        let span = hi - lo;
        if !(span > 0.0) {
            return (Self { scale: MIN_SCALE, zero_point: -128 }, true);
        }
        let scale = span / 255.0;
        let zero_point = ((-128.0 - lo / scale).round() as i32).clamp(-128, 127);
        (Self { scale, zero_point }, false)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(QuantError::Format(format!("scale {} is not positive", self.scale)));
        }
        if !(-128..=127).contains(&self.zero_point) {
            return Err(QuantError::Format(format!("zero point {} outside int8", self.zero_point)));
        }
        Ok(())
    }

    /// Round half away from zero, then saturate to int8.
    pub fn quantize(&self, x: f64) -> i8 {
        let q = (x / self.scale).round() + f64::from(self.zero_point);
        q.clamp(-128.0, 127.0) as i8
    }

    pub fn dequantize(&self, q: i8) -> f64 {
        self.scale * f64::from(i32::from(q) - self.zero_point)
    }

    pub fn quantize_all(&self, xs: &[f64]) -> Vec<i8> {
        xs.iter().map(|&x| self.quantize(x)).collect()
    }
}

/// Bias quantized to int32 at scale `input_scale × weight_scale`, zero point 0.
pub fn quantize_bias(bias: &[f64], scale: f64) -> Result<Vec<i32>> {
    bias.iter()
        .map(|&b| {
            let q = (b / scale).round();
            if q.abs() > f64::from(i32::MAX) {
                Err(QuantError::Overflow(format!("bias {b} does not fit int32 at scale {scale:e}")))
            } else {
                Ok(q as i32)
            }
        })
        .collect()
}

/// Fixed-point multiplier: `real ≈ mantissa × 2^(−shift)` with the mantissa
/// normalized to `[2^30, 2^31)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Requant {
    pub mantissa: i32,
    pub shift: u32,
}

impl Requant {
    pub fn from_real(m: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(QuantError::Format(format!("requantization multiplier {m} is not positive")));
        }
        // m = frac · 2^exp with frac in [0.5, 1)
        let mut exp = m.log2().floor() as i32 + 1;
        let mut frac = m / 2f64.powi(exp);
        if frac >= 1.0 {
            frac /= 2.0;
            exp += 1;
        } else if frac < 0.5 {
            frac *= 2.0;
            exp -= 1;
        }
        let mut mantissa = (frac * 2f64.powi(31)).round() as i64;
        if mantissa == 1 << 31 {
            mantissa = 1 << 30;
            exp += 1;
        }
        let shift = 31 - exp;
        if !(1..=62).contains(&shift) {
            return Err(QuantError::Overflow(format!("requantization multiplier {m:e} out of range")));
        }
        Ok(Self { mantissa: mantissa as i32, shift: shift as u32 })
    }

    pub fn validate(&self) -> Result<()> {
        if !(1 << 30..=i32::MAX).contains(&self.mantissa) || !(1..=62).contains(&self.shift) {
            return Err(QuantError::Format(format!("bad requantization pair {self:?}")));
        }
        Ok(())
    }

    pub fn as_real(&self) -> f64 {
        f64::from(self.mantissa) * 2f64.powi(-(self.shift as i32))
    }

    /// `round(acc × mantissa / 2^shift)`, ties away from zero.
    pub fn apply(&self, acc: i32) -> i64 {
        let p = i64::from(acc) * i64::from(self.mantissa);
        let half = 1i64 << (self.shift - 1);
        let mag = (p.unsigned_abs() as i64 + half) >> self.shift;
        if p < 0 {
            -mag
        } else {
            mag
        }
    }
}

/// `10·log10(Σx² / Σ(x − x̂)²)` in dB; infinite when the error is zero.
pub fn snr_db(original: &[f64], reconstructed: &[f64]) -> f64 {
    let signal: f64 = original.iter().map(|x| x * x).sum();
    let noise: f64 = original.iter().zip(reconstructed).map(|(x, y)| (x - y) * (x - y)).sum();
    if noise == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (signal / noise).log10()
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn ternary_weights_are_exact() {
        let w = [-1.0, 0.0, 1.0, 1.0, -1.0, 0.0];
        let (p, degenerate) = QuantParams::symmetric(&w);
        assert!(!degenerate);
        let back: Vec<f64> = p.quantize_all(&w).into_iter().map(|q| p.dequantize(q)).collect();
        assert_eq!(back, w);
        assert_eq!(snr_db(&w, &back), f64::INFINITY);
    }

    #[test]
    fn degenerate_tensors_get_the_floor() {
        let (p, degenerate) = QuantParams::symmetric(&[0.0; 4]);
        assert!(degenerate);
        assert_eq!(p.scale, MIN_SCALE);
        assert_eq!(p.quantize(0.0), 0);
        let (a, degenerate) = QuantParams::asymmetric(0.0, 0.0);
        assert!(degenerate);
        assert_eq!(a.dequantize(a.quantize(0.0)), 0.0);
    }

    #[test]
    fn asymmetric_covers_zero() {
        let (p, _) = QuantParams::asymmetric(0.5, 3.0);
        assert_eq!(p.zero_point, -128);
        assert_eq!(p.dequantize(p.quantize(0.0)), 0.0);
        let (p, _) = QuantParams::asymmetric(-2.0, 3.0);
        assert_eq!(p.dequantize(p.quantize(0.0)), 0.0);
        assert_eq!(p.quantize(-2.0), -128);
        assert_eq!(p.quantize(3.0), 127);
    }

    #[test]
    fn requant_examples() {
        let r = Requant::from_real(0.5).unwrap();
        assert_eq!(r, Requant { mantissa: 1 << 30, shift: 31 });
        assert_eq!(r.apply(3), 2); // 1.5 rounds away from zero
        assert_eq!(r.apply(-3), -2);
        assert_eq!(r.apply(4), 2);
        assert!(Requant::from_real(0.0).is_err());
        assert!(Requant::from_real(1e-30).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_within_half_step(w in prop::collection::vec(-50.0f64..50.0, 1..200)) {
            let (p, _) = QuantParams::symmetric(&w);
            for &x in &w {
                prop_assert!((p.dequantize(p.quantize(x)) - x).abs() <= p.scale / 2.0 * (1.0 + 1e-12));
            }
        }

        #[test]
        fn activation_round_trip_within_half_step(xs in prop::collection::vec(-20.0f64..80.0, 1..200)) {
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (p, _) = QuantParams::asymmetric(lo, hi);
            for &x in &xs {
                prop_assert!((p.dequantize(p.quantize(x)) - x).abs() <= p.scale / 2.0 * (1.0 + 1e-9) + 1e-12);
            }
        }

        #[test]
        fn requant_matches_real_product(m in 1e-6f64..0.99, acc in -2_000_000i32..2_000_000) {
            let r = Requant::from_real(m).unwrap();
            prop_assert!((r.as_real() - m).abs() <= m * 2f64.powi(-30));
            let exact = f64::from(acc) * r.as_real();
            prop_assert!((r.apply(acc) as f64 - exact).abs() <= 0.5 + 1e-9);
        }
    }
}
