//! Trip energy prediction for battery electric vehicles.
//!
//! A point-mass longitudinal model drives a quasi-static battery model to
//! produce a physics baseline; statistical learners for clustered
//! (trip-level) longitudinal data then predict the baseline's cumulative
//! residual. Models are compared by leave-one-trip-out cross-validation on
//! the absolute percentage error of the terminal cumulative energy.
//!
//! Modules:
//! - [`dataset`]: trip time series, ingestion and preprocessing, design matrices
//! - [`physics`]: vehicle dynamics and battery simulation
//! - [`mixed`]: random-intercept models, penalized splines, GAMM fitting
//! - [`ensemble`]: subject-bootstrap random forests and residual boosting
//! - [`eval`]: hybrid prediction, LOOCV, grid sweeps and a synthetic generator

pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod mixed;
pub mod model;
pub mod par;
pub mod physics;
pub mod rng;

pub use error::{Error, Result};
