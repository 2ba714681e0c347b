use super::vehicle::{BatterySpec, VehicleSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState {
    pub soc: f64,
    /// A, positive while discharging.
    pub current: f64,
    /// Terminal voltage (V).
    pub voltage: f64,
    /// Open-circuit voltage at the start of the step (V).
    pub ocv: f64,
}

/// Pack open-circuit voltage, linear in SOC between the per-cell limits.
pub fn open_circuit_voltage(battery: &BatterySpec, soc: f64) -> f64 {
    let cell = battery.ocv_at_empty + soc * (battery.ocv_at_full - battery.ocv_at_empty);
    cell * f64::from(battery.cells_series)
}

/// Current and terminal voltage delivering `p_batt` from open-circuit
/// voltage `voc` through resistance `r`: the smaller root of
/// `r I² - voc I + p = 0`, written in a form that stays exact as `r -> 0`.
/// `None` when the demand exceeds `voc² / 4r`.
pub fn solve_terminal(voc: f64, r: f64, p_batt: f64) -> Option<(f64, f64)> {
    let disc = voc * voc - 4.0 * r * p_batt;
    if disc < 0.0 {
        return None;
    }
    let current = 2.0 * p_batt / (voc + disc.sqrt());
    Some((current, voc - current * r))
}

/// Advances the pack by `dt` seconds at battery power `p_batt`. A failing
/// standalone step reports sample 0.
pub fn battery_step(soc: f64, spec: &VehicleSpec, p_batt: f64, dt: f64) -> Result<BatteryState> {
    if !(0.0..=1.0).contains(&soc) {
        return Err(Error::InvalidArgument(format!("soc {soc} outside [0, 1]")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step {dt} must be positive")));
    }
    let b = &spec.battery;
    let ocv = open_circuit_voltage(b, soc);
    let (current, voltage) = solve_terminal(ocv, b.pack_resistance(), p_batt).ok_or(Error::PowerLimit {
        sample: 0,
        power: p_batt,
    })?;
    let soc = (soc - current * dt / b.pack_charge()).clamp(0.0, 1.0);
    Ok(BatteryState {
        soc,
        current,
        voltage,
        ocv,
    })
}
