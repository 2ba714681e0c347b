//! Per-trip preprocessing: decimation, gap filling, elevation differencing,
//! energy integration and charging-segment detection.

use std::ops::Range;

use super::trip::{channel, TripSeries};
use crate::error::{Error, Result};

/// Keeps samples `0, k, 2k, ...` of every channel.
pub fn downsample(trip: &TripSeries, keep_every: usize) -> Result<TripSeries> {
    if keep_every == 0 {
        return Err(Error::InvalidArgument("keep_every must be >= 1".into()));
    }
    if keep_every == 1 {
        return Ok(trip.clone());
    }
    let indices: Vec<usize> = (0..trip.len()).step_by(keep_every).collect();
    if indices.len() < 2 {
        return Err(Error::DegenerateTrip {
            trip: trip.trip_id().to_string(),
            reason: format!(
                "{} samples leave {} after keeping every {keep_every}th",
                trip.len(),
                indices.len()
            ),
        });
    }
    Ok(trip.select(&indices))
}

/// Fills gaps by linear interpolation in `t` between the nearest known
/// neighbours; leading and trailing gaps take the nearest known value.
pub fn interpolate_missing(x: &[Option<f64>], t: &[f64]) -> Result<Vec<f64>> {
    if x.len() != t.len() {
        return Err(Error::Alignment(format!(
            "channel has {} samples, time has {}",
            x.len(),
            t.len()
        )));
    }
    let known: Vec<usize> = (0..x.len()).filter(|&j| x[j].is_some()).collect();
    let (&first, &last) = match (known.first(), known.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Imputation("channel has no observed values".into())),
    };
    let out = (0..x.len())
        .map(|j| {
            if let Some(v) = x[j] {
                return v;
            }
            if j < first {
                return x[first].unwrap();
            }
            if j > last {
                return x[last].unwrap();
            }
            let next = known.partition_point(|&k| k < j);
            let (k0, k1) = (known[next - 1], known[next]);
            let (x0, x1) = (t[k0], t[k1]);
            let (y0, y1) = (x[k0].unwrap(), x[k1].unwrap());
            y0 + (t[j] - x0) * (y1 - y0) / (x1 - x0)
        })
        .collect();
    Ok(out)
}

/// NaN-as-missing convenience wrapper around [`interpolate_missing`].
pub fn fill_gaps(x: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    if x.iter().all(|v| !v.is_nan()) {
        return Ok(x.to_vec());
    }
    let opt: Vec<Option<f64>> = x.iter().map(|&v| (!v.is_nan()).then_some(v)).collect();
    interpolate_missing(&opt, t)
}

/// `out[j] = elevation[j] - elevation[j-1]`, with `out[0] = 0`.
pub fn diff_elevation(trip: &TripSeries) -> Vec<f64> {
    let e = trip.elevation();
    let mut out = Vec::with_capacity(e.len());
    out.push(0.0);
    out.extend(e.windows(2).map(|w| w[1] - w[0]));
    out
}

/// Battery power `I * V` in watts.
pub fn instantaneous_power(trip: &TripSeries) -> Result<Vec<f64>> {
    let i = trip.require(channel::BATTERY_CURRENT)?;
    let v = trip.require(channel::BATTERY_VOLTAGE)?;
    Ok(i.iter().zip(v).map(|(i, v)| i * v).collect())
}

/// Cumulative battery energy in joules, left-rectangle rule:
/// `e[j] = sum_{k<=j} I[k] V[k] (t[k] - t[k-1])`, with the first step empty.
pub fn measured_energy(trip: &TripSeries) -> Result<Vec<f64>> {
    let p = instantaneous_power(trip)?;
    Ok(cumulate(&p, trip.t()))
}

pub(crate) fn cumulate(power: &[f64], t: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(power.len());
    for j in 0..power.len() {
        if j > 0 {
            acc += power[j] * (t[j] - t[j - 1]);
        }
        out.push(acc);
    }
    out
}

/// `measured_energy - phys_pred`, sample by sample.
pub fn compute_residual(trip: &TripSeries, phys_pred: &[f64]) -> Result<Vec<f64>> {
    let measured = trip.require(channel::MEASURED_ENERGY)?;
    if measured.len() != phys_pred.len() {
        return Err(Error::Alignment(format!(
            "trip `{}`: measured energy has {} samples, physics prediction {}",
            trip.trip_id(),
            measured.len(),
            phys_pred.len()
        )));
    }
    Ok(measured.iter().zip(phys_pred).map(|(m, p)| m - p).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargingThresholds {
    /// Speeds at or below this count as standing still (km/h).
    pub v_eps: f64,
    /// Battery power at or below `-p_threshold` counts as charging (W).
    pub p_threshold: f64,
}

impl Default for ChargingThresholds {
    fn default() -> Self {
        ChargingThresholds {
            v_eps: 0.1,
            p_threshold: 5000.0,
        }
    }
}

/// Maximal index ranges where the vehicle stands still while the battery
/// takes in strongly negative power.
pub fn detect_charging(trip: &TripSeries, thresholds: &ChargingThresholds) -> Result<Vec<Range<usize>>> {
    let power = instantaneous_power(trip)?;
    let v = trip.velocity();
    let mut ranges = Vec::new();
    let mut start: Option<usize> = None;
    for j in 0..trip.len() {
        let hit = v[j] <= thresholds.v_eps && power[j] <= -thresholds.p_threshold;
        match (hit, start) {
            (true, None) => start = Some(j),
            (false, Some(s)) => {
                ranges.push(s..j);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        ranges.push(s..trip.len());
    }
    Ok(ranges)
}

/// Outcome of [`prepare_trip`].
#[derive(Debug, Clone, PartialEq)]
pub enum Prepared {
    Kept(TripSeries),
    Dropped { trip: String, reason: String },
}

/// Ingestion chain for one raw trip: keep every `keep_every`th sample, drop
/// the trip if it contains a charging segment, fill gaps in every channel,
/// then add `diff_elevation` and (when current and voltage are present)
/// `measured_energy`.
pub fn prepare_trip(trip: &TripSeries, keep_every: usize, thresholds: &ChargingThresholds) -> Result<Prepared> {
    let trip = downsample(trip, keep_every)?;
    let has_power =
        trip.channel(channel::BATTERY_CURRENT).is_some() && trip.channel(channel::BATTERY_VOLTAGE).is_some();
    if has_power {
        if let Some(r) = detect_charging(&trip, thresholds)?.first() {
            return Ok(Prepared::Dropped {
                trip: trip.trip_id().to_string(),
                reason: format!("charging pattern at samples {}..{}", r.start, r.end),
            });
        }
    }
    let mut out = trip.clone();
    for (name, values) in trip.channels() {
        if values.iter().any(|v| v.is_nan()) {
            let filled = fill_gaps(values, trip.t()).map_err(|e| match e {
                Error::Imputation(m) => Error::Imputation(format!("trip `{}`, `{name}`: {m}", trip.trip_id())),
                other => other,
            })?;
            out = out.with_channel(name, filled)?;
        }
    }
    let de = diff_elevation(&out);
    out = out.with_channel(channel::DIFF_ELEVATION, de)?;
    if has_power {
        let e = measured_energy(&out)?;
        out = out.with_channel(channel::MEASURED_ENERGY, e)?;
    }
    Ok(Prepared::Kept(out))
}
