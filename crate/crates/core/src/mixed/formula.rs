use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothTerm {
    pub var: String,
    /// Knot count; falls back to the fit options' default.
    #[serde(rename = "K", alias = "k", default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<usize>,
}

/// Smooth of `smooth` that is switched on by each non-base level of
/// `categorical`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ByTerm {
    pub smooth: String,
    pub categorical: String,
}

/// Additive mixed-model specification.
///
/// ```json
/// {"response": "residual_phy",
///  "smooth_terms": [{"var": "time", "K": 20}],
///  "linear_terms": ["weather"],
///  "interactions": [["ambient_temp", "diff_elevation"]],
///  "by_terms": [{"smooth": "time", "categorical": "seasonality"}],
///  "random_intercept": "trip_id"}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Formula {
    pub response: String,
    #[serde(default)]
    pub smooth_terms: Vec<SmoothTerm>,
    #[serde(default)]
    pub linear_terms: Vec<String>,
    /// Each pair becomes one smooth of the product of the two variables.
    #[serde(default)]
    pub interactions: Vec<[String; 2]>,
    #[serde(default)]
    pub by_terms: Vec<ByTerm>,
    #[serde(default)]
    pub random_intercept: Option<String>,
}

impl Formula {
    pub fn from_json(text: &str) -> Result<Self> {
        let f: Formula = serde_json::from_str(text)?;
        if let Some(g) = &f.random_intercept {
            if g != "trip_id" {
                return Err(Error::Schema(format!(
                    "random intercept grouping `{g}` not supported (only trip_id)"
                )));
            }
        }
        Ok(f)
    }

    fn smooth(var: &str) -> SmoothTerm {
        SmoothTerm {
            var: var.to_string(),
            knots: None,
        }
    }

    /// Residual model for data with seasonality and weather labels: smooths
    /// of time, ambient temperature, velocity and elevation change,
    /// winter-specific time and temperature smooths, a temperature x
    /// elevation-change interaction, weather offsets and a trip intercept.
    pub fn full(response: &str) -> Self {
        Formula {
            response: response.to_string(),
            smooth_terms: ["time", "ambient_temp", "velocity", "diff_elevation"]
                .iter()
                .map(|v| Self::smooth(v))
                .collect(),
            linear_terms: vec!["weather".into()],
            interactions: vec![["ambient_temp".into(), "diff_elevation".into()]],
            by_terms: vec![
                ByTerm {
                    smooth: "time".into(),
                    categorical: "seasonality".into(),
                },
                ByTerm {
                    smooth: "ambient_temp".into(),
                    categorical: "seasonality".into(),
                },
            ],
            random_intercept: Some("trip_id".into()),
        }
    }

    /// Reduced model for data without trip labels.
    pub fn reduced(response: &str) -> Self {
        Formula {
            response: response.to_string(),
            smooth_terms: ["time", "ambient_temp", "velocity", "diff_elevation"]
                .iter()
                .map(|v| Self::smooth(v))
                .collect(),
            linear_terms: vec![],
            interactions: vec![["ambient_temp".into(), "diff_elevation".into()]],
            by_terms: vec![],
            random_intercept: Some("trip_id".into()),
        }
    }

    /// Every panel feature the formula reads, in first-mention order.
    pub fn features(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |s: &str| {
            if !out.iter().any(|o| o == s) {
                out.push(s.to_string());
            }
        };
        for s in &self.smooth_terms {
            push(&s.var);
        }
        for [a, b] in &self.interactions {
            push(a);
            push(b);
        }
        for b in &self.by_terms {
            push(&b.smooth);
            push(&b.categorical);
        }
        for l in &self.linear_terms {
            push(l);
        }
        out
    }
}
