use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::trip::{channel, TripSeries};
use crate::error::{Error, Result};

/// Semantic role of a CSV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Time,
    TripId,
    Velocity,
    Elevation,
    AmbientTemp,
    BatteryCurrent,
    BatteryVoltage,
    BatteryTemp,
    HeatingPower,
    AcPower,
    DiffElevation,
    MeasuredEnergy,
    PhysPred,
    ResidualPhy,
    Seasonality,
    Weather,
    Route,
}

impl Role {
    pub const ALL: [Role; 17] = [
        Role::Time,
        Role::TripId,
        Role::Velocity,
        Role::Elevation,
        Role::AmbientTemp,
        Role::BatteryCurrent,
        Role::BatteryVoltage,
        Role::BatteryTemp,
        Role::HeatingPower,
        Role::AcPower,
        Role::DiffElevation,
        Role::MeasuredEnergy,
        Role::PhysPred,
        Role::ResidualPhy,
        Role::Seasonality,
        Role::Weather,
        Role::Route,
    ];

    /// Canonical channel or attribute name.
    pub fn name(self) -> &'static str {
        match self {
            Role::Time => channel::TIME,
            Role::TripId => "trip_id",
            Role::Velocity => channel::VELOCITY,
            Role::Elevation => channel::ELEVATION,
            Role::AmbientTemp => channel::AMBIENT_TEMP,
            Role::BatteryCurrent => channel::BATTERY_CURRENT,
            Role::BatteryVoltage => channel::BATTERY_VOLTAGE,
            Role::BatteryTemp => channel::BATTERY_TEMP,
            Role::HeatingPower => channel::HEATING_POWER,
            Role::AcPower => channel::AC_POWER,
            Role::DiffElevation => channel::DIFF_ELEVATION,
            Role::MeasuredEnergy => channel::MEASURED_ENERGY,
            Role::PhysPred => channel::PHYS_PRED,
            Role::ResidualPhy => channel::RESIDUAL_PHY,
            Role::Seasonality => channel::SEASONALITY,
            Role::Weather => channel::WEATHER,
            Role::Route => channel::ROUTE,
        }
    }

    pub fn is_categorical(self) -> bool {
        matches!(self, Role::TripId | Role::Seasonality | Role::Weather | Role::Route)
    }
}

/// Column-name to role mapping, read from a JSON object
/// `{"column_name": "role", ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    pub columns: BTreeMap<String, Role>,
}

impl Schema {
    /// Every role mapped from a column of the same (canonical) name; this
    /// is the layout [`write_trip_csv`] produces.
    pub fn canonical() -> Self {
        Schema {
            columns: Role::ALL.iter().map(|r| (r.name().to_string(), *r)).collect(),
        }
    }

    /// Column layout of the TUM driving-excursion recordings.
    pub fn tum() -> Self {
        let pairs = [
            ("Time [s]", Role::Time),
            ("Trip.id", Role::TripId),
            ("Seasonality", Role::Seasonality),
            ("Weather", Role::Weather),
            ("Velocity [km/h]", Role::Velocity),
            ("Elevation [m]", Role::Elevation),
            ("Battery Temperature [°C]", Role::BatteryTemp),
            ("Requested Heating Power [kW]", Role::HeatingPower),
            ("AirCon Power [kW]", Role::AcPower),
            ("Ambient Temperature [°C]", Role::AmbientTemp),
            ("Battery Current [A]", Role::BatteryCurrent),
            ("Battery Voltage [V]", Role::BatteryVoltage),
        ];
        Schema {
            columns: pairs.iter().map(|(c, r)| (c.to_string(), *r)).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
}

/// Parses one trip from CSV bytes. Empty, `NA` and `NaN` cells become NaN
/// gaps (to be filled by [`super::fill_gaps`]); time stamps may not have gaps.
/// `trip_id` overrides any id column in the file.
pub fn parse_trip_csv<R: Read>(bytes: R, schema: &Schema, trip_id: Option<&str>) -> Result<TripSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = reader.headers()?.clone();

    let mut mapped: Vec<(usize, Role)> = Vec::new();
    for (idx, name) in header.iter().enumerate() {
        if let Some(&role) = schema.columns.get(name) {
            if mapped.iter().any(|&(_, r)| r == role) {
                return Err(Error::Schema(format!(
                    "role `{}` mapped from more than one column",
                    role.name()
                )));
            }
            mapped.push((idx, role));
        }
    }
    for role in [Role::Time, Role::Velocity, Role::Elevation] {
        if !mapped.iter().any(|&(_, r)| r == role) {
            return Err(Error::Schema(format!(
                "mandatory column for `{}` not found in header",
                role.name()
            )));
        }
    }

    let mut numeric: BTreeMap<Role, Vec<f64>> = BTreeMap::new();
    let mut categorical: BTreeMap<Role, Option<String>> = BTreeMap::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        for &(idx, role) in &mapped {
            let cell = record.get(idx).unwrap_or("");
            if role.is_categorical() {
                let slot = categorical.entry(role).or_insert(None);
                if slot.is_none() && !cell.is_empty() {
                    *slot = Some(cell.to_string());
                }
            } else {
                let value = if is_missing(cell) {
                    None
                } else {
                    match cell.parse::<f64>() {
                        Ok(x) if x.is_finite() => Some(x),
                        _ => {
                            return Err(Error::Data(format!(
                                "column for `{}` not numeric at data row {}: `{cell}`",
                                role.name(),
                                row_no + 1
                            )))
                        }
                    }
                };
                if role == Role::Time && value.is_none() {
                    return Err(Error::Data(format!("time stamp missing at data row {}", row_no + 1)));
                }
                numeric.entry(role).or_default().push(value.unwrap_or(f64::NAN));
            }
        }
    }

    let id = match (trip_id, categorical.get(&Role::TripId).cloned().flatten()) {
        (Some(id), _) => id.to_string(),
        (None, Some(id)) => id,
        (None, None) => {
            return Err(Error::Schema(
                "no trip id supplied and no trip_id column present".into(),
            ))
        }
    };

    let t = numeric.remove(&Role::Time).unwrap_or_default();
    let velocity = numeric.remove(&Role::Velocity).unwrap_or_default();
    let elevation = numeric.remove(&Role::Elevation).unwrap_or_default();
    let mut trip = TripSeries::new(id, t, velocity, elevation)?;
    for (role, values) in numeric {
        trip.insert_channel(role.name(), values)?;
    }
    for (role, value) in categorical {
        if role == Role::TripId {
            continue;
        }
        if let Some(v) = value {
            trip = trip.with_attribute(role.name(), v);
        }
    }
    Ok(trip)
}

/// Writes a trip's time stamps and every numeric channel under canonical
/// column names. Categorical attributes live in the panel manifest.
pub fn write_trip_csv<W: Write>(trip: &TripSeries, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let names: Vec<&str> = trip.channels().map(|(k, _)| k).collect();
    let mut header = vec![channel::TIME];
    header.extend(names.iter().copied());
    writer.write_record(&header)?;
    let columns: Vec<&[f64]> = names.iter().map(|n| trip.channel(n).unwrap()).collect();
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for j in 0..trip.len() {
        row.clear();
        row.push(format_value(trip.t()[j]));
        row.extend(columns.iter().map(|c| format_value(c[j])));
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

fn format_value(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        // Shortest representation that round-trips exactly.
        format!("{x:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_csv() {
        let csv = "time,velocity,elevation\n0,0,500\n1,10,500\n2,20,501\n";
        let trip = parse_trip_csv(csv.as_bytes(), &Schema::canonical(), Some("t1")).unwrap();
        assert_eq!(trip.len(), 3);
        assert_eq!(trip.velocity(), &[0.0, 10.0, 20.0]);
        assert!(trip.channel("battery_current").is_none());
    }

    #[test]
    fn non_monotone_time_is_data_error() {
        let csv = "time,velocity,elevation\n0,0,0\n2,0,0\n1,0,0\n";
        let err = parse_trip_csv(csv.as_bytes(), &Schema::canonical(), Some("t")).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn missing_mandatory_column_is_schema_error() {
        let csv = "time,velocity\n0,0\n1,0\n";
        let err = parse_trip_csv(csv.as_bytes(), &Schema::canonical(), Some("t")).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn gaps_become_nan() {
        let csv = "time,velocity,elevation\n0,1,0\n1,,0\n2,NA,0\n";
        let trip = parse_trip_csv(csv.as_bytes(), &Schema::canonical(), Some("t")).unwrap();
        assert!(trip.velocity()[1].is_nan() && trip.velocity()[2].is_nan());
    }

    #[test]
    fn garbage_cell_is_data_error() {
        let csv = "time,velocity,elevation\n0,fast,0\n";
        assert!(parse_trip_csv(csv.as_bytes(), &Schema::canonical(), Some("t")).is_err());
    }

    #[test]
    fn tum_schema_populates_all_channels() {
        let schema = Schema::tum();
        let header: Vec<&str> = schema.columns.keys().map(String::as_str).collect();
        let mut csv = header.join(",") + "\n";
        for j in 0..3 {
            let row: Vec<String> = schema
                .columns
                .values()
                .map(|role| match role {
                    Role::Time => j.to_string(),
                    Role::TripId => "TripA01".into(),
                    Role::Seasonality => "summer".into(),
                    Role::Weather => "cloudy".into(),
                    _ => format!("{}.5", j + 1),
                })
                .collect();
            csv += &(row.join(",") + "\n");
        }
        let trip = parse_trip_csv(csv.as_bytes(), &schema, None).unwrap();
        assert_eq!(schema.columns.len(), 12);
        assert_eq!(trip.trip_id(), "TripA01");
        assert_eq!(trip.attribute("seasonality"), Some("summer"));
        assert_eq!(trip.attribute("weather"), Some("cloudy"));
        for name in [
            "velocity",
            "elevation",
            "ambient_temp",
            "battery_current",
            "battery_voltage",
            "battery_temp",
            "heating_power",
            "ac_power",
        ] {
            assert_eq!(trip.channel(name).unwrap().len(), 3, "{name}");
        }
    }

    #[test]
    fn schema_json_round_trip() {
        let json = r#"{"Time": "time", "Speed": "velocity", "Alt": "elevation"}"#;
        let schema = Schema::from_json(json).unwrap();
        assert_eq!(schema.columns["Speed"], Role::Velocity);
        let csv = "Time,Speed,Alt\n0,1,2\n1,1,2\n";
        let trip = parse_trip_csv(csv.as_bytes(), &schema, Some("x")).unwrap();
        let mut buf = Vec::new();
        write_trip_csv(&trip, &mut buf).unwrap();
        let back = parse_trip_csv(buf.as_slice(), &Schema::canonical(), Some("x")).unwrap();
        assert_eq!(back, trip);
    }
}
