use super::battery::{battery_step, open_circuit_voltage, solve_terminal};
use super::dynamics::{tractive_power, wheel_to_battery};
use super::vehicle::VehicleSpec;
use crate::dataset::{channel, compute_residual, PanelDataset, TripSeries};
use crate::error::{Error, Result};
use crate::par;

/// Initial state of charge used when none is given.
pub const DEFAULT_SOC0: f64 = 0.9;

/// Below this horizontal distance per step (m) the grade is taken as 0.
const MIN_RUN: f64 = 0.1;

/// Per-sample simulator outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub current: Vec<f64>,
    pub voltage: Vec<f64>,
    pub ocv: Vec<f64>,
    pub soc: Vec<f64>,
    pub tractive_power: Vec<f64>,
    pub battery_power: Vec<f64>,
    /// Cumulative battery energy (J), `sum_{k<=j} I V dt_k` with `dt_0 = 0`.
    pub predicted_energy: Vec<f64>,
}

/// Runs the vehicle over a recorded trace: time (s), velocity (km/h) and
/// elevation (m). Acceleration is the backward difference of speed; grade
/// is elevation change over the distance covered in the step.
pub fn simulate_trip(
    spec: &VehicleSpec,
    t: &[f64],
    velocity_kmh: &[f64],
    elevation: &[f64],
    soc0: f64,
) -> Result<SimulationResult> {
    spec.validate()?;
    let n = t.len();
    if velocity_kmh.len() != n || elevation.len() != n {
        return Err(Error::Alignment(format!(
            "time has {n} samples, velocity {}, elevation {}",
            velocity_kmh.len(),
            elevation.len()
        )));
    }
    if !(0.0..=1.0).contains(&soc0) {
        return Err(Error::InvalidArgument(format!("initial soc {soc0} outside [0, 1]")));
    }
    let mut out = SimulationResult {
        current: Vec::with_capacity(n),
        voltage: Vec::with_capacity(n),
        ocv: Vec::with_capacity(n),
        soc: Vec::with_capacity(n),
        tractive_power: Vec::with_capacity(n),
        battery_power: Vec::with_capacity(n),
        predicted_energy: Vec::with_capacity(n),
    };
    let mut soc = soc0;
    let mut energy = 0.0;
    for j in 0..n {
        let v = velocity_kmh[j].max(0.0) / 3.6;
        let (a, grade, dt) = if j == 0 {
            (0.0, 0.0, 0.0)
        } else {
            let dt = t[j] - t[j - 1];
            let a = (v - velocity_kmh[j - 1].max(0.0) / 3.6) / dt;
            let run = v * dt;
            let grade = if run < MIN_RUN {
                0.0
            } else {
                (elevation[j] - elevation[j - 1]) / run
            };
            (a, grade, dt)
        };
        let p_tr = tractive_power(spec, v, a, grade);
        let p_b = wheel_to_battery(spec, p_tr);
        let (current, voltage, ocv) = if j == 0 {
            let ocv = open_circuit_voltage(&spec.battery, soc);
            let (i, u) = solve_terminal(ocv, spec.battery.pack_resistance(), p_b)
                .ok_or(Error::PowerLimit { sample: 0, power: p_b })?;
            (i, u, ocv)
        } else {
            let st = battery_step(soc, spec, p_b, dt).map_err(|e| match e {
                Error::PowerLimit { power, .. } => Error::PowerLimit { sample: j, power },
                other => other,
            })?;
            soc = st.soc;
            (st.current, st.voltage, st.ocv)
        };
        energy += current * voltage * dt;
        out.current.push(current);
        out.voltage.push(voltage);
        out.ocv.push(ocv);
        out.soc.push(soc);
        out.tractive_power.push(p_tr);
        out.battery_power.push(p_b);
        out.predicted_energy.push(energy);
    }
    Ok(out)
}

/// Adds `phys_pred` (and `residual_phy`, when measured energy is present)
/// to a trip.
pub fn annotate_trip(spec: &VehicleSpec, trip: &TripSeries, soc0: f64) -> Result<TripSeries> {
    let sim = simulate_trip(spec, trip.t(), trip.velocity(), trip.elevation(), soc0).map_err(|e| match e {
        Error::PowerLimit { sample, power } => {
            log::error!("trip `{}`: power limit at sample {sample}", trip.trip_id());
            Error::PowerLimit { sample, power }
        }
        other => other,
    })?;
    let mut out = trip.clone().with_channel(channel::PHYS_PRED, sim.predicted_energy)?;
    if out.channel(channel::MEASURED_ENERGY).is_some() {
        let residual = compute_residual(&out, out.require(channel::PHYS_PRED)?)?;
        out = out.with_channel(channel::RESIDUAL_PHY, residual)?;
    }
    Ok(out)
}

/// [`annotate_trip`] over a whole panel, trips in parallel.
pub fn annotate_panel(spec: &VehicleSpec, panel: &PanelDataset, soc0: f64) -> Result<PanelDataset> {
    let trips = par::map(panel.trips(), |t| annotate_trip(spec, t, soc0));
    PanelDataset::new(trips.into_iter().collect::<Result<Vec<_>>>()?)
}
