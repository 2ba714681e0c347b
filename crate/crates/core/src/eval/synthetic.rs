use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{channel, diff_elevation, PanelDataset, TripSeries};
use crate::error::{Error, Result};
use crate::par;
use crate::physics::{simulate_trip, VehicleSpec, DEFAULT_SOC0};
use crate::rng::{derive_seed, seeded};

const WEATHER: [&str; 3] = ["sunny", "cloudy", "rainy"];
const ROUTES: [&str; 3] = ["urban", "rural", "highway"];

/// Below this ambient temperature (°C) a trip is labelled winter.
const WINTER_BELOW: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_trips: usize,
    pub samples_per_trip: usize,
    /// Sampling interval (s).
    pub dt: f64,
    /// Trip-intercept SD (J).
    pub sigma_b: f64,
    /// Per-sample noise SD (J).
    pub sigma_eps: f64,
    /// Scale (J) of the smooth time effect.
    pub amp_time: f64,
    /// Scale (J) of the smooth temperature effect.
    pub amp_temp: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_trips: 50,
            samples_per_trip: 200,
            dt: 10.0,
            sigma_b: 1.8e6,
            sigma_eps: 5.0e4,
            amp_time: 1.6e6,
            amp_temp: 5.0e5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.n_trips < 1 || self.samples_per_trip < 1 {
            return Err(Error::InvalidArgument(
                "trip and sample counts must be at least 1".into(),
            ));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        for (name, v) in [
            ("sigma_b", self.sigma_b),
            ("sigma_eps", self.sigma_eps),
            ("amp_time", self.amp_time),
            ("amp_temp", self.amp_temp),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Shape of the time effect: a slow ramp with a ripple, 0 at t = 0.
pub fn time_shape(t: f64) -> f64 {
    t / 1000.0 + 0.25 * (t / 300.0).sin()
}

/// Shape of the temperature effect: 0 at 20 °C, growing on both sides.
pub fn temp_shape(temp: f64) -> f64 {
    ((20.0 - temp) / 10.0).powi(2)
}

/// Hidden components of one generated trip, all in joules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripTruth {
    pub trip_id: String,
    pub physics: Vec<f64>,
    pub time_effect: Vec<f64>,
    pub temp_effect: f64,
    pub intercept: f64,
    pub noise: Vec<f64>,
}

impl TripTruth {
    /// The part of the residual a model can learn from the features.
    pub fn smooth_residual(&self) -> Vec<f64> {
        self.time_effect.iter().map(|s| s + self.temp_effect).collect()
    }
}

fn drive_cycle(rng: &mut crate::rng::Rng, n: usize, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let jitter = Normal::new(0.0, 4.0).expect("valid sd");
    let slope = Normal::new(0.0, 0.008).expect("valid sd");
    let mut v = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut target = rng.random_range(40.0..110.0);
    let mut speed: f64 = 0.0;
    let mut grade: f64 = 0.0;
    let mut height = rng.random_range(100.0..600.0);
    for j in 0..n {
        if j > 0 {
            let u: f64 = rng.random();
            if u < 0.03 {
                target = 0.0;
            } else if u < 0.10 {
                target = rng.random_range(20.0..130.0);
            }
            let step = (0.3 * (target - speed) + jitter.sample(rng)).clamp(-30.0, 25.0);
            let next = (speed + step).clamp(0.0, 130.0);
            grade = (0.9 * grade + slope.sample(rng)).clamp(-0.06, 0.06);
            height += grade * 0.5 * (speed + next) / 3.6 * dt;
            speed = next;
        }
        v.push(speed);
        z.push(height);
    }
    (v, z)
}

fn generate_trip(cfg: &SyntheticConfig, spec: &VehicleSpec, i: usize) -> Result<(TripSeries, TripTruth)> {
    let mut rng = seeded(derive_seed(cfg.seed, i as u64));
    let n = cfg.samples_per_trip;
    let t: Vec<f64> = (0..n).map(|j| j as f64 * cfg.dt).collect();
    let (v, z) = drive_cycle(&mut rng, n, cfg.dt);
    let temp: f64 = rng.random_range(-5.0..30.0);
    let weather = WEATHER[rng.random_range(0..WEATHER.len())];
    let route = ROUTES[rng.random_range(0..ROUTES.len())];
    let intercept = Normal::new(0.0, cfg.sigma_b)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .sample(&mut rng);
    let eps = Normal::new(0.0, cfg.sigma_eps).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let noise: Vec<f64> = (0..n).map(|_| eps.sample(&mut rng)).collect();

    let physics = simulate_trip(spec, &t, &v, &z, DEFAULT_SOC0)?.predicted_energy;
    let time_effect: Vec<f64> = t.iter().map(|&s| cfg.amp_time * time_shape(s)).collect();
    let temp_effect = cfg.amp_temp * temp_shape(temp);
    let measured: Vec<f64> = (0..n)
        .map(|j| physics[j] + time_effect[j] + temp_effect + intercept + noise[j])
        .collect();

    let id = format!("trip{i:03}");
    let trip = TripSeries::new(&id, t, v, z)?;
    let de = diff_elevation(&trip);
    let trip = trip
        .with_channel(channel::DIFF_ELEVATION, de)?
        .with_channel(channel::AMBIENT_TEMP, vec![temp; n])?
        .with_channel(channel::MEASURED_ENERGY, measured)?
        .with_attribute(
            channel::SEASONALITY,
            if temp < WINTER_BELOW { "winter" } else { "summer" },
        )
        .with_attribute(channel::WEATHER, weather)
        .with_attribute(channel::ROUTE, route);
    let truth = TripTruth {
        trip_id: id,
        physics,
        time_effect,
        temp_effect,
        intercept,
        noise,
    };
    Ok((trip, truth))
}

/// Random trips driven through the default vehicle, with measured energy
/// = physics + time effect + temperature effect + trip intercept + noise.
///
/// Trips are generated in parallel from per-trip seeds, so the panel is
/// identical for a given seed whatever the thread count.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<(PanelDataset, Vec<TripTruth>)> {
    config.validate()?;
    let spec = VehicleSpec::default();
    let out = par::map_range(config.n_trips, |i| generate_trip(config, &spec, i));
    let (trips, truth): (Vec<_>, Vec<_>) = out.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok((PanelDataset::new(trips)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixed::{fit_null_lmm, icc};
    use crate::physics::annotate_panel;

    fn small(seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            n_trips: 6,
            samples_per_trip: 50,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn no_effects_means_physics_exactly() {
        let cfg = SyntheticConfig {
            sigma_b: 0.0,
            sigma_eps: 0.0,
            amp_time: 0.0,
            amp_temp: 0.0,
            ..small(3)
        };
        let (panel, truth) = generate_synthetic(&cfg).unwrap();
        for (trip, tt) in panel.trips().iter().zip(&truth) {
            assert_eq!(trip.require(channel::MEASURED_ENERGY).unwrap(), tt.physics.as_slice());
        }
    }

    #[test]
    fn residual_is_the_planted_part() {
        let (panel, truth) = generate_synthetic(&small(4)).unwrap();
        let annotated = annotate_panel(&VehicleSpec::default(), &panel, DEFAULT_SOC0).unwrap();
        for (trip, tt) in annotated.trips().iter().zip(&truth) {
            let r = trip.require(channel::RESIDUAL_PHY).unwrap();
            for (j, x) in r.iter().enumerate() {
                let want = tt.time_effect[j] + tt.temp_effect + tt.intercept + tt.noise[j];
                assert!((x - want).abs() <= 1e-6 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn same_seed_same_panel() {
        let (a, _) = generate_synthetic(&small(5)).unwrap();
        let (b, _) = generate_synthetic(&small(5)).unwrap();
        assert_eq!(a.trips(), b.trips());
        let (c, _) = generate_synthetic(&small(6)).unwrap();
        assert_ne!(a.trips(), c.trips());
    }

    #[test]
    fn profiles_are_plausible() {
        let (panel, _) = generate_synthetic(&small(7)).unwrap();
        for trip in panel.trips() {
            let v = trip.velocity();
            assert!(v.iter().all(|x| (0.0..=130.0).contains(x)));
            for w in v.windows(2) {
                let a = (w[1] - w[0]) / 3.6 / 10.0;
                assert!(a.abs() <= 1.0, "{a} m/s²");
            }
            let season = trip.attribute(channel::SEASONALITY).unwrap();
            let winter = trip.require(channel::AMBIENT_TEMP).unwrap()[0] < WINTER_BELOW;
            assert_eq!(season == "winter", winter);
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate_synthetic(&SyntheticConfig {
            n_trips: 0,
            ..Default::default()
        })
        .is_err());
        assert!(generate_synthetic(&SyntheticConfig {
            sigma_b: -1.0,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn residual_icc_tracks_variance_share() {
        // No smooth effects: the residual ICC is σ_b² / (σ_b² + σ_eps²) = 0.25.
        let mut sum = 0.0;
        for seed in 0..20 {
            let cfg = SyntheticConfig {
                n_trips: 50,
                samples_per_trip: 40,
                sigma_b: 1.0,
                sigma_eps: 3f64.sqrt(),
                amp_time: 0.0,
                amp_temp: 0.0,
                seed,
                ..Default::default()
            };
            let (panel, _) = generate_synthetic(&cfg).unwrap();
            let panel = annotate_panel(&VehicleSpec::default(), &panel, DEFAULT_SOC0).unwrap();
            sum += icc(&fit_null_lmm(&panel, channel::RESIDUAL_PHY).unwrap()).unwrap();
        }
        let rho = sum / 20.0;
        assert!((rho - 0.25).abs() <= 0.05, "icc {rho}");
    }
}
