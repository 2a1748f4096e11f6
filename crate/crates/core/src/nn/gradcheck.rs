//! Central finite-difference check of [`loss_and_grad`].

use super::model::{loss_and_grad, ModelParams, Sample};
use super::{NnError, Result};
use crate::Exec;

/// Denominator floor in the relative error `|a - n| / (|a| + FLOOR)`.
pub const GRADCHECK_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Parameter index where the maximum occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub params_checked: usize,
}

/// Mean cross-entropy computed from the forward logits only.
fn batch_loss(model: &ModelParams, batch: &[Sample<'_>]) -> Result<f64> {
    let mut total = 0.0;
    for s in batch {
        let z = model.logits(s.input)?;
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - z[s.label];
    }
    Ok(total / batch.len() as f64)
}

/// Compares analytic gradients with `(L(θ+h) − L(θ−h)) / 2h` on every parameter.
pub fn gradient_check(model: &ModelParams, batch: &[Sample<'_>], h: f64, exec: Exec) -> Result<GradCheck> {
    if batch.is_empty() {
        return Err(NnError::Empty("batch"));
    }
    let (_, grad) = loss_and_grad(model, batch, exec)?;
    let numeric = exec.map_range(model.len(), |i| -> Result<f64> {
        let mut p = model.clone();
        let orig = p.as_slice()[i];
        p.as_mut_slice()[i] = orig + h;
        let up = batch_loss(&p, batch)?;
        p.as_mut_slice()[i] = orig - h;
        let down = batch_loss(&p, batch)?;
        Ok((up - down) / (2.0 * h))
    });
    let mut out =
        GradCheck { max_relative_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0, params_checked: model.len() };
    for (i, n) in numeric.into_iter().enumerate() {
        let n = n?;
        let a = grad.as_slice()[i];
        let rel = (a - n).abs() / (a.abs() + GRADCHECK_FLOOR);
        if rel > out.max_relative_error || i == 0 {
            out = GradCheck { max_relative_error: rel, worst_index: i, analytic: a, numeric: n, ..out };
        }
    }
    Ok(out)
}
