use super::{Result, SimError};

/// Concentration in a fully mixed, accumulating tank after `t_s` seconds of
/// infusing a `c_source` g/L solution at `q_ml_min` mL/min into `v0_ml` mL.
///
/// `c(t) = c_source · q·t / (V0 + q·t)` with `q` in mL/s; there is no outflow.
pub fn concentration_at(t_s: f64, q_ml_min: f64, v0_ml: f64, c_source: f64) -> Result<f64> {
    if !(t_s >= 0.0) {
        return Err(SimError::NegativeTime(t_s));
    }
    if !(q_ml_min >= 0.0) {
        return Err(SimError::InvalidScenario(format!("flow rate {q_ml_min} < 0")));
    }
    if !(v0_ml > 0.0) {
        return Err(SimError::InvalidScenario(format!("initial volume {v0_ml} <= 0")));
    }
    let infused = q_ml_min / 60.0 * t_s;
    Ok(c_source * infused / (v0_ml + infused))
}

/// Forward-Euler integration of the mass balance `d(cV)/dt = c_source·q`,
/// `dV/dt = q`, used as an independent check on [`concentration_at`].
pub fn euler_concentration(t_s: f64, q_ml_min: f64, v0_ml: f64, c_source: f64, dt: f64) -> f64 {
    let q = q_ml_min / 60.0;
    let steps = (t_s / dt).round() as usize;
    let (mut c, mut v) = (0.0, v0_ml);
    for _ in 0..steps {
        let dc = q * (c_source - c) / v;
        c += dc * dt;
        v += q * dt;
    }
    c
}
