use serde::{Deserialize, Serialize};

use super::encode::OneHotEncoder;
use super::trip::{PanelDataset, TripSeries};
use crate::error::{Error, Result};

/// How one requested feature maps onto design columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric(String),
    Categorical(OneHotEncoder),
}

/// Feature list resolved against a training panel: numeric channels pass
/// through, categorical attributes carry their fitted encoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignLayout {
    pub features: Vec<FeatureKind>,
}

impl DesignLayout {
    pub fn fit(panel: &PanelDataset, features: &[String]) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Schema("empty feature list".into()));
        }
        let mut kinds = Vec::with_capacity(features.len());
        for name in features {
            let numeric_everywhere = panel.trips().iter().all(|t| t.channel(name).is_some());
            if numeric_everywhere {
                kinds.push(FeatureKind::Numeric(name.clone()));
                continue;
            }
            let has_attribute = panel.trips().iter().any(|t| t.attribute(name).is_some());
            if has_attribute {
                let enc = OneHotEncoder::fit(name, panel.trips().iter().map(|t| t.attribute(name)))?;
                kinds.push(FeatureKind::Categorical(enc));
                continue;
            }
            let trip = panel
                .trips()
                .iter()
                .find(|t| t.channel(name).is_none())
                .map(|t| t.trip_id().to_string())
                .unwrap_or_default();
            return Err(Error::ChannelMissing {
                trip,
                channel: name.clone(),
            });
        }
        Ok(DesignLayout { features: kinds })
    }

    pub fn column_names(&self) -> Vec<String> {
        self.features
            .iter()
            .flat_map(|f| match f {
                FeatureKind::Numeric(n) => vec![n.clone()],
                FeatureKind::Categorical(enc) => enc.column_names(),
            })
            .collect()
    }

    /// Column indices of each feature; a categorical feature spans its
    /// one-hot block.
    pub fn column_groups(&self) -> Vec<(String, Vec<usize>)> {
        let mut start = 0;
        self.features
            .iter()
            .map(|f| {
                let (name, w) = match f {
                    FeatureKind::Numeric(n) => (n.clone(), 1),
                    FeatureKind::Categorical(enc) => (enc.name.clone(), enc.width()),
                };
                let cols = (start..start + w).collect();
                start += w;
                (name, cols)
            })
            .collect()
    }

    pub fn width(&self) -> usize {
        self.features
            .iter()
            .map(|f| match f {
                FeatureKind::Numeric(_) => 1,
                FeatureKind::Categorical(enc) => enc.width(),
            })
            .sum()
    }

    /// One row per sample of every trip. `response = None` fills the
    /// response with NaN (prediction-only designs).
    pub fn assemble<'a>(
        &self,
        trips: impl IntoIterator<Item = &'a TripSeries>,
        response: Option<&str>,
    ) -> Result<DesignMatrix> {
        let columns = self.column_names();
        let width = columns.len();
        let mut m = DesignMatrix {
            columns,
            data: Vec::new(),
            response: Vec::new(),
            subject_of_row: Vec::new(),
            unseen_levels: 0,
        };
        for trip in trips {
            let n = trip.len();
            let y = match response {
                Some(name) => trip.require(name)?.to_vec(),
                None => vec![f64::NAN; n],
            };
            let mut block = vec![0.0; n * width];
            let mut offset = 0;
            for f in &self.features {
                match f {
                    FeatureKind::Numeric(name) => {
                        let x = trip.require(name)?;
                        for j in 0..n {
                            block[j * width + offset] = x[j];
                        }
                        offset += 1;
                    }
                    FeatureKind::Categorical(enc) => {
                        let (code, known) = enc.encode(trip.attribute(&enc.name));
                        if !known {
                            log::warn!(
                                "trip `{}`: level {:?} of `{}` not seen in training, encoded as zeros",
                                trip.trip_id(),
                                trip.attribute(&enc.name),
                                enc.name
                            );
                            m.unseen_levels += 1;
                        }
                        for j in 0..n {
                            block[j * width + offset..j * width + offset + code.len()].copy_from_slice(&code);
                        }
                        offset += enc.width();
                    }
                }
            }
            m.data.extend_from_slice(&block);
            m.response.extend_from_slice(&y);
            m.subject_of_row
                .extend(std::iter::repeat_n(trip.trip_id().to_string(), n));
        }
        Ok(m)
    }
}

/// Row-major observation matrix with response and subject labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub columns: Vec<String>,
    data: Vec<f64>,
    pub response: Vec<f64>,
    pub subject_of_row: Vec<String>,
    /// Trips whose categorical level was unseen by the encoder.
    pub unseen_levels: usize,
}

impl DesignMatrix {
    pub fn from_rows(
        columns: Vec<String>,
        rows: &[Vec<f64>],
        response: Vec<f64>,
        subject_of_row: Vec<String>,
    ) -> Result<Self> {
        let width = columns.len();
        if rows.len() != response.len() || rows.len() != subject_of_row.len() {
            return Err(Error::Alignment(format!(
                "{} rows, {} responses, {} subject labels",
                rows.len(),
                response.len(),
                subject_of_row.len()
            )));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::Alignment(format!(
                "row {r} has {} values, expected {width}",
                rows[r].len()
            )));
        }
        Ok(DesignMatrix {
            columns,
            data: rows.concat(),
            response,
            subject_of_row,
            unseen_levels: 0,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.n_cols();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_cols().max(1)).take(self.n_rows())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let w = self.n_cols();
        self.data[i * w + j] = value;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.get(i, j)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Distinct subject labels in first-appearance order.
    pub fn subjects(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.subject_of_row
            .iter()
            .filter(|s| seen.insert(s.as_str()))
            .cloned()
            .collect()
    }

    /// Rows whose subject satisfies `keep`, in original order.
    pub fn select_subjects(&self, keep: impl Fn(&str) -> bool) -> DesignMatrix {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| keep(&self.subject_of_row[i])).collect();
        self.select_rows(&idx)
    }

    pub fn select_rows(&self, idx: &[usize]) -> DesignMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols());
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            columns: self.columns.clone(),
            data,
            response: idx.iter().map(|&i| self.response[i]).collect(),
            subject_of_row: idx.iter().map(|&i| self.subject_of_row[i].clone()).collect(),
            unseen_levels: self.unseen_levels,
        }
    }

    pub fn with_response(mut self, response: Vec<f64>) -> Result<Self> {
        if response.len() != self.n_rows() {
            return Err(Error::Alignment("response length differs from row count".into()));
        }
        self.response = response;
        Ok(self)
    }

    /// Fails unless `other` has exactly these columns in this order.
    pub fn check_columns(&self, other: &[String]) -> Result<()> {
        if self.columns != other {
            return Err(Error::Schema(format!(
                "design columns {:?} do not match training columns {:?}",
                self.columns, other
            )));
        }
        Ok(())
    }
}

/// Fits a [`DesignLayout`] on `panel` and assembles its design matrix.
pub fn assemble_design(panel: &PanelDataset, features: &[String], response: &str) -> Result<DesignMatrix> {
    DesignLayout::fit(panel, features)?.assemble(panel.trips(), Some(response))
}
