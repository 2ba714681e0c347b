use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::csv_io::{parse_trip_csv, write_trip_csv, Schema};
use super::trip::{PanelDataset, TripSeries};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub trip_id: String,
    /// CSV path, relative to the manifest's directory.
    pub file: PathBuf,
    /// Trip-level categorical attributes (seasonality, weather, route, ...).
    #[serde(flatten)]
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub trips: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Reads every trip listed in the manifest. Manifest attributes take
/// precedence over categorical columns in the CSV.
pub fn read_panel(manifest_path: &Path, schema: &Schema) -> Result<PanelDataset> {
    let manifest = Manifest::load(manifest_path)?;
    read_manifest_trips(&manifest, manifest_path, schema)?
        .into_iter()
        .collect::<Result<Vec<_>>>()
        .and_then(PanelDataset::new)
}

/// Like [`read_panel`], but yields one result per manifest entry so callers
/// can log and skip unreadable trips.
pub fn read_manifest_trips(
    manifest: &Manifest,
    manifest_path: &Path,
    schema: &Schema,
) -> Result<Vec<Result<TripSeries>>> {
    if manifest.trips.is_empty() {
        return Err(Error::Data(format!(
            "manifest {} lists no trips",
            manifest_path.display()
        )));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    Ok(manifest
        .trips
        .iter()
        .map(|entry| {
            let path = base.join(&entry.file);
            let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            let mut trip = parse_trip_csv(file, schema, Some(&entry.trip_id))?;
            for (k, v) in &entry.attributes {
                trip = trip.with_attribute(k, v.clone());
            }
            Ok(trip)
        })
        .collect())
}

/// Writes `manifest.json` plus one canonical-schema CSV per trip into `dir`.
pub fn write_panel(dir: &Path, panel: &PanelDataset) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest::default();
    for trip in panel.trips() {
        let file = PathBuf::from(format!("{}.csv", sanitize(trip.trip_id())));
        let path = dir.join(&file);
        let out = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_trip_csv(trip, std::io::BufWriter::new(out))?;
        manifest.trips.push(ManifestEntry {
            trip_id: trip.trip_id().to_string(),
            file,
            attributes: trip.attributes().clone(),
        });
    }
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panel_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let trip = |id: &str| {
            TripSeries::new(id, vec![0.0, 1.5, 3.0], vec![1.0, 2.0, 3.5], vec![500.0, 500.25, 499.0])
                .unwrap()
                .with_channel("ambient_temp", vec![21.0, 21.1, f64::NAN])
                .unwrap()
                .with_attribute("weather", "sunny")
        };
        let panel = PanelDataset::new(vec![trip("a/1"), trip("b")]).unwrap();
        let manifest = write_panel(dir.path(), &panel).unwrap();
        let back = read_panel(&manifest, &Schema::canonical()).unwrap();
        assert_eq!(back.len(), 2);
        let a = back.get("a/1").unwrap();
        assert_eq!(a.attribute("weather"), Some("sunny"));
        assert_eq!(a.elevation(), panel.trips()[0].elevation());
        assert!(a.channel("ambient_temp").unwrap()[2].is_nan());
    }

    #[test]
    fn empty_manifest_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        fs::write(&path, r#"{"trips": []}"#).unwrap();
        assert!(read_panel(&path, &Schema::canonical()).is_err());
    }

    #[test]
    fn missing_file_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        fs::write(&path, r#"{"trips": [{"trip_id": "x", "file": "nope.csv"}]}"#).unwrap();
        match read_panel(&path, &Schema::canonical()) {
            Err(Error::Io { path, .. }) => assert!(path.ends_with("nope.csv")),
            other => panic!("{other:?}"),
        }
    }
}
