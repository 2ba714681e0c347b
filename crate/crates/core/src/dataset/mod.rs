//! Panel data model and preprocessing.
//!
//! A [`PanelDataset`] is a set of trips (the subjects `i`), each a
//! [`TripSeries`] of time-aligned samples (the repeated measures `j`).

mod csv_io;
mod design;
mod encode;
mod preprocess;
mod store;
mod trip;

pub use csv_io::{parse_trip_csv, write_trip_csv, Role, Schema};
pub use design::{assemble_design, DesignLayout, DesignMatrix, FeatureKind};
pub use encode::{one_hot, OneHotEncoder};
pub use preprocess::{
    compute_residual, detect_charging, diff_elevation, downsample, fill_gaps, instantaneous_power, interpolate_missing,
    measured_energy, prepare_trip, ChargingThresholds, Prepared,
};
pub use store::{read_manifest_trips, read_panel, write_panel, Manifest, ManifestEntry, MANIFEST_FILE};
pub use trip::{channel, PanelDataset, TripSeries};
