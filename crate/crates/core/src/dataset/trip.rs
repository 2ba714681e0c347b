use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

/// Canonical channel and attribute names.
pub mod channel {
    pub const TIME: &str = "time";
    pub const VELOCITY: &str = "velocity";
    pub const ELEVATION: &str = "elevation";
    pub const AMBIENT_TEMP: &str = "ambient_temp";
    pub const BATTERY_CURRENT: &str = "battery_current";
    pub const BATTERY_VOLTAGE: &str = "battery_voltage";
    pub const BATTERY_TEMP: &str = "battery_temp";
    pub const HEATING_POWER: &str = "heating_power";
    pub const AC_POWER: &str = "ac_power";
    pub const DIFF_ELEVATION: &str = "diff_elevation";
    pub const MEASURED_ENERGY: &str = "measured_energy";
    pub const PHYS_PRED: &str = "phys_pred";
    pub const RESIDUAL_PHY: &str = "residual_phy";

    pub const SEASONALITY: &str = "seasonality";
    pub const WEATHER: &str = "weather";
    pub const ROUTE: &str = "route";
}

/// One trip: strictly increasing time stamps (seconds from trip start),
/// numeric channels aligned with them, and trip-level categorical
/// attributes. Velocity and elevation are always present.
#[derive(Debug, Clone, PartialEq)]
pub struct TripSeries {
    trip_id: String,
    t: Vec<f64>,
    channels: BTreeMap<String, Vec<f64>>,
    attributes: BTreeMap<String, String>,
}

impl TripSeries {
    pub fn new(trip_id: impl Into<String>, t: Vec<f64>, velocity: Vec<f64>, elevation: Vec<f64>) -> Result<Self> {
        let trip_id = trip_id.into();
        check_time(&trip_id, &t)?;
        let mut trip = TripSeries {
            trip_id,
            t,
            channels: BTreeMap::new(),
            attributes: BTreeMap::new(),
        };
        trip.insert_channel(channel::VELOCITY, velocity)?;
        trip.insert_channel(channel::ELEVATION, elevation)?;
        Ok(trip)
    }

    /// Returns a copy with `name` set to `values` (replacing any existing
    /// channel of that name).
    pub fn with_channel(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        self.insert_channel(name, values)?;
        Ok(self)
    }

    pub fn with_attribute(mut self, name: &str, value: impl Into<String>) -> Self {
        self.attributes.insert(name.to_string(), value.into());
        self
    }

    pub(crate) fn insert_channel(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if name == channel::TIME {
            return Err(Error::Schema("time is not a replaceable channel".into()));
        }
        if values.len() != self.t.len() {
            return Err(Error::Alignment(format!(
                "channel `{name}` on trip `{}` has {} samples, time has {}",
                self.trip_id,
                values.len(),
                self.t.len()
            )));
        }
        self.channels.insert(name.to_string(), values);
        Ok(())
    }

    pub fn trip_id(&self) -> &str {
        &self.trip_id
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn velocity(&self) -> &[f64] {
        &self.channels[channel::VELOCITY]
    }

    pub fn elevation(&self) -> &[f64] {
        &self.channels[channel::ELEVATION]
    }

    /// Looks up a numeric channel; `"time"` resolves to the time stamps.
    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        if name == channel::TIME {
            return Some(&self.t);
        }
        self.channels.get(name).map(Vec::as_slice)
    }

    pub fn require(&self, name: &str) -> Result<&[f64]> {
        self.channel(name).ok_or_else(|| Error::ChannelMissing {
            trip: self.trip_id.clone(),
            channel: name.to_string(),
        })
    }

    pub fn channels(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.channels.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn attribute(&self, name: &str) -> Option<&str> {
        self.attributes.get(name).map(String::as_str)
    }

    pub fn attributes(&self) -> &BTreeMap<String, String> {
        &self.attributes
    }

    /// Keeps only the samples at `indices` (which must be increasing).
    pub(crate) fn select(&self, indices: &[usize]) -> TripSeries {
        let pick = |v: &[f64]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        TripSeries {
            trip_id: self.trip_id.clone(),
            t: pick(&self.t),
            channels: self.channels.iter().map(|(k, v)| (k.clone(), pick(v))).collect(),
            attributes: self.attributes.clone(),
        }
    }
}

fn check_time(trip_id: &str, t: &[f64]) -> Result<()> {
    if t.is_empty() {
        return Err(Error::DegenerateTrip {
            trip: trip_id.to_string(),
            reason: "no samples".into(),
        });
    }
    if let Some(j) = t.iter().position(|x| !x.is_finite()) {
        return Err(Error::Data(format!(
            "trip `{trip_id}`: time stamp at row {j} is missing or not finite"
        )));
    }
    if let Some(j) = t.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Data(format!(
            "trip `{trip_id}`: time not strictly increasing at row {} ({} -> {})",
            j + 1,
            t[j],
            t[j + 1]
        )));
    }
    Ok(())
}

/// A non-empty collection of trips with unique ids.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    trips: Vec<TripSeries>,
    subject_index: HashMap<String, usize>,
}

impl PanelDataset {
    pub fn new(trips: Vec<TripSeries>) -> Result<Self> {
        if trips.is_empty() {
            return Err(Error::Data("panel has no trips".into()));
        }
        let mut subject_index = HashMap::with_capacity(trips.len());
        for (i, trip) in trips.iter().enumerate() {
            if subject_index.insert(trip.trip_id.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate trip id `{}`", trip.trip_id)));
            }
        }
        Ok(PanelDataset { trips, subject_index })
    }

    pub fn trips(&self) -> &[TripSeries] {
        &self.trips
    }

    pub fn into_trips(self) -> Vec<TripSeries> {
        self.trips
    }

    pub fn len(&self) -> usize {
        self.trips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trips.is_empty()
    }

    pub fn get(&self, trip_id: &str) -> Option<&TripSeries> {
        self.subject_index.get(trip_id).map(|&i| &self.trips[i])
    }

    pub fn position(&self, trip_id: &str) -> Option<usize> {
        self.subject_index.get(trip_id).copied()
    }

    pub fn trip_ids(&self) -> impl Iterator<Item = &str> {
        self.trips.iter().map(|t| t.trip_id.as_str())
    }

    pub fn n_observations(&self) -> usize {
        self.trips.iter().map(TripSeries::len).sum()
    }

    /// Panel restricted to trips for which `keep` holds. Fails if none remain.
    pub fn filter(&self, mut keep: impl FnMut(&TripSeries) -> bool) -> Result<PanelDataset> {
        PanelDataset::new(self.trips.iter().filter(|t| keep(t)).cloned().collect())
    }

    /// Applies `f` to every trip, rebuilding the panel.
    pub fn try_map(&self, f: impl Fn(&TripSeries) -> Result<TripSeries>) -> Result<PanelDataset> {
        PanelDataset::new(self.trips.iter().map(f).collect::<Result<Vec<_>>>()?)
    }
}
