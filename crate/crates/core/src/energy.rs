//! Duty-cycle energy accounting for one-minute capsule operating cycles.
//!
//! Units: seconds, μA, μAh, μC. Component energies are the inputs; currents
//! are derived.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative deviation from a reference total above which a case is flagged.
pub const MISMATCH_THRESHOLD: f64 = 0.005;

/// Cases shipped with the crate.
pub const REFERENCE_CASES_CSV: &str = include_str!("../data/duty_cycle_cases.csv");

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("case `{case}`: {msg}")]
    InvalidCase { case: String, msg: String },
    #[error("active time is zero; implied current is undefined")]
    ZeroActiveTime,
    #[error("inference and transmission counts are both zero")]
    NoCycles,
    #[error("all-transmit energy is zero")]
    ZeroBaseline,
    #[error("cycle energy must be positive")]
    ZeroCycleEnergy,
    #[error("battery capacity must be non-negative")]
    NegativeCapacity,
    #[error("cases file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EnergyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LowPowerMode {
    Standby,
    Stop,
}

impl fmt::Display for LowPowerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LowPowerMode::Standby => "standby",
            LowPowerMode::Stop => "stop",
        })
    }
}

impl FromStr for LowPowerMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standby" => Ok(Self::Standby),
            "stop" => Ok(Self::Stop),
            other => Err(format!("unknown low-power mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DutyCycleCase {
    pub name: String,
    pub active_time_s: f64,
    pub mcu_active_energy_uah: f64,
    pub low_power_mode: LowPowerMode,
    pub standby_current_ua: f64,
    pub standby_time_s: f64,
    /// Measured total to compare against, if one is known.
    pub reference_total_uah: Option<f64>,
}

impl DutyCycleCase {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(EnergyError::InvalidCase { case: self.name.clone(), msg: msg.into() });
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.active_time_s) || !finite_nonneg(self.standby_time_s) {
            return bad("times must be finite and non-negative");
        }
        if !finite_nonneg(self.mcu_active_energy_uah) {
            return bad("active energy must be finite and non-negative");
        }
        if !(self.standby_current_ua.is_finite() && self.standby_current_ua > 0.0) {
            return bad("standby current must be positive");
        }
        if self.reference_total_uah.is_some_and(|r| !finite_nonneg(r)) {
            return bad("reference total must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergySummary {
    pub standby_energy_uah: f64,
    pub total_energy_uah: f64,
    pub total_charge_uc: f64,
    /// `None` when the active time is zero.
    pub implied_active_current_ua: Option<f64>,
}

impl EnergySummary {
    pub fn implied_active_current(&self) -> Result<f64> {
        self.implied_active_current_ua.ok_or(EnergyError::ZeroActiveTime)
    }
}

pub fn cycle_energy(case: &DutyCycleCase) -> Result<EnergySummary> {
    case.validate()?;
    let standby = case.standby_current_ua * case.standby_time_s / 3600.0;
    let total = case.mcu_active_energy_uah + standby;
    let implied = (case.active_time_s > 0.0).then(|| case.mcu_active_energy_uah * 3600.0 / case.active_time_s);
    Ok(EnergySummary {
        standby_energy_uah: standby,
        total_energy_uah: total,
        total_charge_uc: total * 3600.0,
        implied_active_current_ua: implied,
    })
}

/// Computed total compared against the case's reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceCheck {
    pub reference_uah: f64,
    pub computed_uah: f64,
    /// `(computed - reference) / reference`
    pub relative_error: f64,
    pub flagged: bool,
}

pub fn check_reference(case: &DutyCycleCase) -> Result<Option<ReferenceCheck>> {
    let summary = cycle_energy(case)?;
    Ok(case.reference_total_uah.map(|r| {
        let rel = (summary.total_energy_uah - r) / r;
        ReferenceCheck {
            reference_uah: r,
            computed_uah: summary.total_energy_uah,
            relative_error: rel,
            flagged: !(rel.abs() <= MISMATCH_THRESHOLD),
        }
    }))
}

/// Which per-cycle energy a comparison uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyBasis {
    /// Totals computed from the case components.
    Computed,
    /// The case's reference total, falling back to the computed one.
    Reference,
}

impl DutyCycleCase {
    pub fn energy(&self, basis: EnergyBasis) -> Result<f64> {
        let computed = cycle_energy(self)?.total_energy_uah;
        Ok(match basis {
            EnergyBasis::Computed => computed,
            EnergyBasis::Reference => self.reference_total_uah.unwrap_or(computed),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioComparison {
    pub energy_mixed_uah: f64,
    pub energy_all_tx_uah: f64,
    pub reduction: f64,
}

/// `n_infer` inference cycles plus `n_tx` transmit cycles, against
/// transmitting in every cycle.
pub fn scenario_compare_energies(e_infer: f64, e_tx: f64, n_infer: u32, n_tx: u32) -> Result<ScenarioComparison> {
    if n_infer == 0 && n_tx == 0 {
        return Err(EnergyError::NoCycles);
    }
    let mixed = f64::from(n_infer) * e_infer + f64::from(n_tx) * e_tx;
    let all_tx = f64::from(n_infer + n_tx) * e_tx;
    if all_tx == 0.0 {
        return Err(EnergyError::ZeroBaseline);
    }
    Ok(ScenarioComparison { energy_mixed_uah: mixed, energy_all_tx_uah: all_tx, reduction: 1.0 - mixed / all_tx })
}

pub fn scenario_compare(
    infer_case: &DutyCycleCase,
    tx_case: &DutyCycleCase,
    n_infer: u32,
    n_tx: u32,
    basis: EnergyBasis,
) -> Result<ScenarioComparison> {
    scenario_compare_energies(infer_case.energy(basis)?, tx_case.energy(basis)?, n_infer, n_tx)
}

/// Hours of operation from a cell of `capacity_mah` at `cycle_energy_uah`
/// per one-minute cycle.
pub fn battery_lifetime(cycle_energy_uah: f64, capacity_mah: f64) -> Result<f64> {
    if !(cycle_energy_uah > 0.0) {
        return Err(EnergyError::ZeroCycleEnergy);
    }
    if !(capacity_mah >= 0.0) {
        return Err(EnergyError::NegativeCapacity);
    }
    Ok(capacity_mah * 1000.0 / (cycle_energy_uah * 60.0))
}

const CASES_HEADER: [&str; 7] = [
    "case",
    "active_time_s",
    "mcu_energy_uah",
    "low_power_mode",
    "standby_current_ua",
    "standby_time_s",
    "reference_total_uah",
];

/// Parses a cases CSV. Blank lines and `#` comments are skipped; the
/// reference column may be empty.
pub fn parse_cases(text: &str) -> Result<Vec<DutyCycleCase>> {
    let mut cases = Vec::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let err = |msg: String| EnergyError::Parse { line: line_no, msg };
        if !header_seen {
            if cols != CASES_HEADER[..cols.len().min(7)] || cols.len() < 6 {
                return Err(err(format!("expected header `{}`", CASES_HEADER.join(","))));
            }
            header_seen = true;
            continue;
        }
        if cols.len() < 6 || cols.len() > 7 {
            return Err(err(format!("expected 6 or 7 columns, found {}", cols.len())));
        }
        let num = |k: usize| -> Result<f64> {
            cols[k].parse::<f64>().map_err(|_| err(format!("{}: `{}` is not a number", CASES_HEADER[k], cols[k])))
        };
        let case = DutyCycleCase {
            name: cols[0].to_string(),
            active_time_s: num(1)?,
            mcu_active_energy_uah: num(2)?,
            low_power_mode: cols[3].parse().map_err(err)?,
            standby_current_ua: num(4)?,
            standby_time_s: num(5)?,
            reference_total_uah: match cols.get(6) {
                Some(s) if !s.is_empty() => Some(num(6)?),
                _ => None,
            },
        };
        case.validate()?;
        cases.push(case);
    }
    if !header_seen {
        return Err(EnergyError::Parse { line: 0, msg: "empty cases file".into() });
    }
    Ok(cases)
}

pub fn load_cases(path: &Path) -> Result<Vec<DutyCycleCase>> {
    parse_cases(&std::fs::read_to_string(path)?)
}

pub fn reference_cases() -> Vec<DutyCycleCase> {
    parse_cases(REFERENCE_CASES_CSV).expect("bundled cases parse")
}

/// Plain-text report: one row per case, then the comparison of the first
/// standby inference case against the first transmit case if both exist.
pub fn report(
    cases: &[DutyCycleCase],
    infer: Option<&str>,
    tx: Option<&str>,
    n_infer: u32,
    n_tx: u32,
) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<6} {:>10} {:>10} {:>8} {:>8} {:>10} {:>10} {:>12} {:>10} {:>10} {:>8}",
        "case",
        "active_s",
        "mcu_uAh",
        "mode",
        "I_sb_uA",
        "sb_uAh",
        "total_uAh",
        "charge_uC",
        "I_act_uA",
        "ref_uAh",
        "ref_err"
    );
    for c in cases {
        let e = cycle_energy(c)?;
        let chk = check_reference(c)?;
        let _ = writeln!(
            s,
            "{:<6} {:>10.5} {:>10.5} {:>8} {:>8.2} {:>10.5} {:>10.5} {:>12.2} {:>10} {:>10} {:>8}{}",
            c.name,
            c.active_time_s,
            c.mcu_active_energy_uah,
            c.low_power_mode,
            c.standby_current_ua,
            e.standby_energy_uah,
            e.total_energy_uah,
            e.total_charge_uc,
            e.implied_active_current_ua.map_or("n/a".into(), |v| format!("{v:.1}")),
            chk.map_or("-".into(), |r| format!("{:.5}", r.reference_uah)),
            chk.map_or("-".into(), |r| format!("{:+.2}%", 100.0 * r.relative_error)),
            if chk.is_some_and(|r| r.flagged) { "  MISMATCH" } else { "" },
        );
    }
    let find = |name: Option<&str>| match name {
        Some(n) => cases.iter().find(|c| c.name == n),
        None => None,
    };
    if let (Some(i), Some(t)) = (find(infer), find(tx)) {
        for basis in [EnergyBasis::Reference, EnergyBasis::Computed] {
            let cmp = scenario_compare(i, t, n_infer, n_tx, basis)?;
            let _ = writeln!(
                s,
                "scenario ({basis:?} totals): {n_infer} x case {} + {n_tx} x case {} = {:.5} uAh vs {} x case {} = {:.5} uAh, reduction {:.2}%",
                i.name,
                t.name,
                cmp.energy_mixed_uah,
                n_infer + n_tx,
                t.name,
                cmp.energy_all_tx_uah,
                100.0 * cmp.reduction
            );
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(name: &str) -> DutyCycleCase {
        reference_cases().into_iter().find(|c| c.name == name).unwrap()
    }

    #[test]
    fn bundled_cases() {
        let cases = reference_cases();
        assert_eq!(cases.len(), 3);
        assert_eq!(cases[2].low_power_mode, LowPowerMode::Stop);
    }

    #[test]
    fn zero_standby_time_total_is_active_energy() {
        let mut c = case("1");
        c.standby_time_s = 0.0;
        let e = cycle_energy(&c).unwrap();
        assert_eq!(e.total_energy_uah, c.mcu_active_energy_uah);
        assert_eq!(e.total_charge_uc, c.mcu_active_energy_uah * 3600.0);
    }

    #[test]
    fn implied_current() {
        // 0.01645 μAh over 8.16 ms
        let e = cycle_energy(&case("1")).unwrap();
        let want = 0.01645 * 3600.0 / 0.00816;
        assert!((e.implied_active_current().unwrap() - want).abs() < 1e-9);
        let mut c = case("1");
        c.active_time_s = 0.0;
        assert!(matches!(cycle_energy(&c).unwrap().implied_active_current(), Err(EnergyError::ZeroActiveTime)));
    }

    #[test]
    fn invalid_cases() {
        let mut c = case("1");
        c.standby_current_ua = 0.0;
        assert!(cycle_energy(&c).is_err());
        let mut c = case("1");
        c.active_time_s = -1.0;
        assert!(cycle_energy(&c).is_err());
    }

    #[test]
    fn trivial_comparisons() {
        let r = scenario_compare_energies(1.0, 5.0, 0, 4).unwrap();
        assert_eq!(r.reduction, 0.0);
        let r = scenario_compare_energies(2.0, 2.0, 9, 1).unwrap();
        assert_eq!(r.reduction, 0.0);
        assert!(matches!(scenario_compare_energies(1.0, 2.0, 0, 0), Err(EnergyError::NoCycles)));
        assert!(matches!(scenario_compare_energies(1.0, 0.0, 3, 1), Err(EnergyError::ZeroBaseline)));
    }

    #[test]
    fn lifetime() {
        assert_eq!(battery_lifetime(0.5, 0.0).unwrap(), 0.0);
        let a = battery_lifetime(0.09144, 40.0).unwrap();
        assert!((battery_lifetime(0.09144, 80.0).unwrap() - 2.0 * a).abs() < 1e-9);
        assert!((a - 40_000.0 / (0.09144 * 60.0)).abs() < 1e-9);
        assert!(battery_lifetime(0.0, 1.0).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text =
            "case,active_time_s,mcu_energy_uah,low_power_mode,standby_current_ua,standby_time_s\nx,1,2,deep,4,5\n";
        match parse_cases(text) {
            Err(EnergyError::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(parse_cases("").is_err());
        assert!(parse_cases("a,b\n").is_err());
        let ok = "case,active_time_s,mcu_energy_uah,low_power_mode,standby_current_ua,standby_time_s\nx,1,2,stop,4,5\n";
        assert_eq!(parse_cases(ok).unwrap()[0].reference_total_uah, None);
    }

    #[test]
    fn report_lists_every_case_and_flags_case_2() {
        let r = report(&reference_cases(), Some("1"), Some("2"), 9, 1).unwrap();
        let flagged: Vec<&str> = r.lines().filter(|l| l.contains("MISMATCH")).collect();
        assert_eq!(flagged.len(), 1);
        assert!(flagged[0].starts_with("2 "));
        assert_eq!(r.lines().filter(|l| l.starts_with("scenario")).count(), 2);
    }
}
