use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of the simulated vehicle. Defaults describe a
/// 2014 BMW i3; frontal area, rolling resistance and drivetrain efficiency
/// are typical values for that class of car.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleSpec {
    /// kg, including the battery pack.
    pub mass: f64,
    /// m
    pub wheel_diameter: f64,
    pub drag_coefficient: f64,
    /// m²
    pub frontal_area: f64,
    pub rolling_resistance_coeff: f64,
    /// Percent of `mass` added as equivalent rotating inertia.
    pub rotational_mass_ratio: f64,
    pub n_wheels: u32,
    /// Motor + inverter + gearbox efficiency, (0, 1].
    pub drivetrain_efficiency: f64,
    /// Share of braking power returned to the battery, [0, 1].
    pub recuperation_fraction: f64,
    pub battery: BatterySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatterySpec {
    /// Ah per cell.
    pub cell_capacity: f64,
    pub cells_series: u32,
    pub cells_parallel: u32,
    /// kg; informational, already part of the vehicle mass.
    pub pack_mass: f64,
    /// Per-cell open-circuit voltage at SOC = 1 (V).
    pub ocv_at_full: f64,
    /// Per-cell open-circuit voltage at SOC = 0 (V).
    pub ocv_at_empty: f64,
    /// Per-cell internal resistance (Ω).
    pub internal_resistance: f64,
}

impl Default for VehicleSpec {
    fn default() -> Self {
        VehicleSpec {
            mass: 1345.0,
            wheel_diameter: 0.6996,
            drag_coefficient: 0.22,
            frontal_area: 2.38,
            rolling_resistance_coeff: 0.01,
            rotational_mass_ratio: 5.0,
            n_wheels: 4,
            drivetrain_efficiency: 0.9,
            recuperation_fraction: 0.5,
            battery: BatterySpec::default(),
        }
    }
}

impl Default for BatterySpec {
    fn default() -> Self {
        BatterySpec {
            cell_capacity: 120.0,
            cells_series: 96,
            cells_parallel: 1,
            pack_mass: 450.0,
            ocv_at_full: 4.15,
            ocv_at_empty: 3.40,
            internal_resistance: 0.001,
        }
    }
}

impl BatterySpec {
    /// Pack resistance: cells in series add, parallel strings divide.
    pub fn pack_resistance(&self) -> f64 {
        self.internal_resistance * f64::from(self.cells_series) / f64::from(self.cells_parallel)
    }

    /// Pack charge capacity in coulombs.
    pub fn pack_charge(&self) -> f64 {
        3600.0 * self.cell_capacity * f64::from(self.cells_parallel)
    }
}

impl VehicleSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::VehicleSpec(m.to_string()));
        if !(self.mass > 0.0) {
            return fail("mass must be positive");
        }
        if !(0.0..=1.0).contains(&self.recuperation_fraction) {
            return fail("recuperation_fraction must lie in [0, 1]");
        }
        if !(self.drivetrain_efficiency > 0.0 && self.drivetrain_efficiency <= 1.0) {
            return fail("drivetrain_efficiency must lie in (0, 1]");
        }
        if self.drag_coefficient < 0.0 || self.frontal_area < 0.0 || self.rolling_resistance_coeff < 0.0 {
            return fail("drag, frontal area and rolling resistance must be non-negative");
        }
        if self.rotational_mass_ratio < 0.0 {
            return fail("rotational_mass_ratio must be non-negative");
        }
        let b = &self.battery;
        if b.cells_series < 1 || b.cells_parallel < 1 {
            return fail("battery needs at least one cell in series and in parallel");
        }
        if !(b.ocv_at_full > b.ocv_at_empty && b.ocv_at_empty > 0.0) {
            return fail("require ocv_at_full > ocv_at_empty > 0");
        }
        if !(b.cell_capacity > 0.0) || b.internal_resistance < 0.0 {
            return fail("cell capacity must be positive and resistance non-negative");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: VehicleSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn with_recuperation(mut self, fraction: f64) -> Result<Self> {
        self.recuperation_fraction = fraction;
        self.validate()?;
        Ok(self)
    }
}
