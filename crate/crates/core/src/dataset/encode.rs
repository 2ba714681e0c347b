use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-hot encoder for a categorical column. Levels are kept in
/// lexicographic order so training and prediction columns line up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHotEncoder {
    pub name: String,
    pub levels: Vec<String>,
}

impl OneHotEncoder {
    pub fn fit<'a>(name: &str, values: impl IntoIterator<Item = Option<&'a str>>) -> Result<Self> {
        let levels: BTreeSet<&str> = values.into_iter().flatten().collect();
        if levels.is_empty() {
            return Err(Error::Data(format!("categorical `{name}` has no observed values")));
        }
        Ok(OneHotEncoder {
            name: name.to_string(),
            levels: levels.into_iter().map(str::to_string).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.levels.len()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.levels.iter().map(|l| format!("{}_{}", self.name, l)).collect()
    }

    /// Writes the encoding of `value` into `out` (length [`Self::width`]).
    /// Returns `false` when the value is missing or was not seen during
    /// fitting; the row is then all zeros.
    pub fn encode_into(&self, value: Option<&str>, out: &mut [f64]) -> bool {
        out.iter_mut().for_each(|x| *x = 0.0);
        match value.and_then(|v| self.levels.binary_search_by(|l| l.as_str().cmp(v)).ok()) {
            Some(k) => {
                out[k] = 1.0;
                true
            }
            None => false,
        }
    }

    pub fn encode(&self, value: Option<&str>) -> (Vec<f64>, bool) {
        let mut row = vec![0.0; self.width()];
        let known = self.encode_into(value, &mut row);
        (row, known)
    }
}

/// Fits an encoder on `values` and returns it with one binary column per
/// level.
pub fn one_hot(name: &str, values: &[Option<&str>]) -> Result<(OneHotEncoder, Vec<Vec<f64>>)> {
    let enc = OneHotEncoder::fit(name, values.iter().copied())?;
    let mut columns = vec![vec![0.0; values.len()]; enc.width()];
    let mut row = vec![0.0; enc.width()];
    for (i, v) in values.iter().enumerate() {
        enc.encode_into(*v, &mut row);
        for (c, x) in columns.iter_mut().zip(&row) {
            c[i] = *x;
        }
    }
    Ok((enc, columns))
}
