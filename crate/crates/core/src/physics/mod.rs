//! Physics baseline: point-mass longitudinal dynamics feeding a
//! quasi-static battery (linear open-circuit voltage in SOC, constant
//! internal resistance).

mod battery;
mod dynamics;
mod simulate;
mod vehicle;

pub use battery::{battery_step, open_circuit_voltage, solve_terminal, BatteryState};
pub use dynamics::{tractive_power, wheel_to_battery, AIR_DENSITY, GRAVITY};
pub use simulate::{annotate_panel, annotate_trip, simulate_trip, SimulationResult, DEFAULT_SOC0};
pub use vehicle::{BatterySpec, VehicleSpec};
