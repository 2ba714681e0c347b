//! Fitted residual models behind one prediction interface, with versioned
//! JSON persistence.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::DesignMatrix;
use crate::ensemble::{BoostedEnsemble, Forest};
use crate::error::{Error, Result};
use crate::mixed::{predict_gamm, GammFit};

pub const MODEL_FORMAT_VERSION: u32 = 1;

pub trait Predict {
    /// Columns the model was trained on.
    fn columns(&self) -> &[String];

    /// One prediction per row. Random intercepts apply to trips seen in
    /// training.
    fn predict(&self, design: &DesignMatrix) -> Result<Vec<f64>>;
}

impl Predict for Forest {
    fn columns(&self) -> &[String] {
        &self.columns
    }

    fn predict(&self, design: &DesignMatrix) -> Result<Vec<f64>> {
        Forest::predict(self, design)
    }
}

impl Predict for BoostedEnsemble {
    fn columns(&self) -> &[String] {
        &self.columns
    }

    fn predict(&self, design: &DesignMatrix) -> Result<Vec<f64>> {
        BoostedEnsemble::predict(self, design)
    }
}

impl Predict for GammFit {
    fn columns(&self) -> &[String] {
        &self.columns
    }

    fn predict(&self, design: &DesignMatrix) -> Result<Vec<f64>> {
        predict_gamm(self, design, true)
    }
}

/// A fitted model of the physics residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    /// Always predicts zero: the physics model alone.
    Zero {
        columns: Vec<String>,
    },
    Gamm(Box<GammFit>),
    Forest(Box<Forest>),
    Boost(Box<BoostedEnsemble>),
}

impl FittedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            FittedModel::Zero { .. } => "zero",
            FittedModel::Gamm(_) => "gamm",
            FittedModel::Forest(_) => "forest",
            FittedModel::Boost(_) => "boost",
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&EnvelopeRef {
            format_version: MODEL_FORMAT_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Envelope = serde_json::from_str(text)?;
        if env.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "model format version {} (expected {MODEL_FORMAT_VERSION})",
                env.format_version
            )));
        }
        Ok(env.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(
            BufWriter::new(f),
            &EnvelopeRef {
                format_version: MODEL_FORMAT_VERSION,
                model: self,
            },
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let env: Envelope = serde_json::from_reader(BufReader::new(f))?;
        if env.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "{}: model format version {} (expected {MODEL_FORMAT_VERSION})",
                path.display(),
                env.format_version
            )));
        }
        Ok(env.model)
    }
}

impl Predict for FittedModel {
    fn columns(&self) -> &[String] {
        match self {
            FittedModel::Zero { columns } => columns,
            FittedModel::Gamm(m) => &m.columns,
            FittedModel::Forest(m) => &m.columns,
            FittedModel::Boost(m) => &m.columns,
        }
    }

    fn predict(&self, design: &DesignMatrix) -> Result<Vec<f64>> {
        match self {
            FittedModel::Zero { columns } => {
                design.check_columns(columns)?;
                Ok(vec![0.0; design.n_rows()])
            }
            FittedModel::Gamm(m) => Predict::predict(m.as_ref(), design),
            FittedModel::Forest(m) => Predict::predict(m.as_ref(), design),
            FittedModel::Boost(m) => Predict::predict(m.as_ref(), design),
        }
    }
}

#[derive(Deserialize)]
struct Envelope {
    format_version: u32,
    model: FittedModel,
}

#[derive(Serialize)]
struct EnvelopeRef<'a> {
    format_version: u32,
    model: &'a FittedModel,
}
