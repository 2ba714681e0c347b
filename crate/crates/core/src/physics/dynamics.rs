use super::vehicle::VehicleSpec;

/// kg/m³ at 20 °C, sea level.
pub const AIR_DENSITY: f64 = 1.2041;
/// m/s²
pub const GRAVITY: f64 = 9.81;

/// Power at the wheels (W) for speed `v` (m/s), acceleration `a` (m/s²) and
/// road grade `grade` (rise over run): aerodynamic drag, rolling
/// resistance, climbing and inertia including rotating masses.
pub fn tractive_power(spec: &VehicleSpec, v: f64, a: f64, grade: f64) -> f64 {
    let theta = grade.atan();
    let m = spec.mass;
    let drag = 0.5 * AIR_DENSITY * spec.drag_coefficient * spec.frontal_area * v * v;
    let rolling = spec.rolling_resistance_coeff * m * GRAVITY * theta.cos();
    let climbing = m * GRAVITY * theta.sin();
    let inertia = m * (1.0 + spec.rotational_mass_ratio / 100.0) * a;
    v * (drag + rolling + climbing + inertia)
}

/// Battery-side power for a wheel-side demand. Traction is divided by the
/// drivetrain efficiency; braking power is returned scaled by efficiency
/// and the recuperation fraction.
pub fn wheel_to_battery(spec: &VehicleSpec, p_tractive: f64) -> f64 {
    if p_tractive >= 0.0 {
        p_tractive / spec.drivetrain_efficiency
    } else {
        p_tractive * spec.drivetrain_efficiency * spec.recuperation_fraction
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standing_still_needs_no_power() {
        let s = VehicleSpec::default();
        assert_eq!(tractive_power(&s, 0.0, 2.0, 0.1), 0.0);
    }

    #[test]
    fn flat_cruise_matches_closed_form() {
        let s = VehicleSpec::default();
        let v = 13.0;
        let expected = v
            * (0.5 * AIR_DENSITY * s.drag_coefficient * s.frontal_area * v * v
                + s.rolling_resistance_coeff * s.mass * GRAVITY);
        assert!((tractive_power(&s, v, 0.0, 0.0) - expected).abs() < 1e-9);
    }

    #[test]
    fn reference_vehicle_at_72_kmh() {
        // Hand evaluation at v = 20 m/s:
        //   drag    0.5 * 1.2041 * 0.22 * 2.38 * 400 = 126.093352 N
        //   rolling 0.01 * 1345 * 9.81              = 131.9445 N
        //   P = 20 * 258.037852                     = 5160.75704 W
        let s = VehicleSpec::default();
        assert!((tractive_power(&s, 20.0, 0.0, 0.0) - 5160.75704).abs() < 1e-6);
    }

    #[test]
    fn battery_mapping() {
        let s = VehicleSpec::default();
        assert!((wheel_to_battery(&s, 10_000.0) - 11_111.111_111).abs() < 1e-3);
        assert!((wheel_to_battery(&s, -10_000.0) + 4500.0).abs() < 1e-9);
        let no_recup = s.with_recuperation(0.0).unwrap();
        assert_eq!(wheel_to_battery(&no_recup, -10_000.0), 0.0);
    }
}
