use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("degenerate trip `{trip}`: {reason}")]
    DegenerateTrip { trip: String, reason: String },

    #[error("imputation error: {0}")]
    Imputation(String),

    #[error("channel `{channel}` missing on trip `{trip}`")]
    ChannelMissing { trip: String, channel: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("invalid vehicle spec: {0}")]
    VehicleSpec(String),

    #[error("power demand of {power:.1} W exceeds deliverable battery power at sample {sample}")]
    PowerLimit { sample: usize, power: f64 },

    #[error("model not identifiable: {0}")]
    Identifiability(String),

    #[error("undefined ICC: both variance components are zero")]
    UndefinedIcc,

    #[error("basis error: {0}")]
    Basis(String),

    #[error("no convergence after {iterations} iterations (last relative change {last_change:e})")]
    Convergence {
        iterations: usize,
        last_change: f64,
        /// Model at the final iteration, when one was formed.
        last: Option<Box<crate::mixed::GammFit>>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degrees of freedom: N = {n} must exceed p = {p}")]
    DegreesOfFreedom { n: usize, p: usize },

    #[error("undefined APE: terminal energy {0} J is below the 1 J guard")]
    UndefinedApe(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
