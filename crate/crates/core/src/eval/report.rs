use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{summarize, Summary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub trip_id: String,
    pub error: String,
}

/// Leave-one-trip-out results for one recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model_tag: String,
    /// Terminal APE of the hybrid estimate for each successful fold.
    pub per_trip: BTreeMap<String, f64>,
    /// Terminal APE of the physics prediction alone.
    pub physics_baseline: BTreeMap<String, f64>,
    pub summary: Option<Summary>,
    pub physics_summary: Option<Summary>,
    pub failed_folds: Vec<FoldFailure>,
    /// Training rows that belonged to the held-out trip, over all folds.
    pub leaked_observations: usize,
}

impl EvaluationReport {
    pub(crate) fn new(
        model_tag: String,
        per_trip: BTreeMap<String, f64>,
        physics_baseline: BTreeMap<String, f64>,
        failed_folds: Vec<FoldFailure>,
        leaked_observations: usize,
    ) -> Self {
        let summary_of = |m: &BTreeMap<String, f64>| summarize(&m.values().copied().collect::<Vec<_>>()).ok();
        EvaluationReport {
            summary: summary_of(&per_trip),
            physics_summary: summary_of(&physics_baseline),
            model_tag,
            per_trip,
            physics_baseline,
            failed_folds,
            leaked_observations,
        }
    }

    pub fn n_failed(&self) -> usize {
        self.failed_folds.len()
    }

    pub fn avg(&self) -> Option<f64> {
        self.summary.map(|s| s.avg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `trip_id,physics_ape,hybrid_ape`; a failed fold leaves the hybrid
    /// cell empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["trip_id", "physics_ape", "hybrid_ape"])?;
        let ids: std::collections::BTreeSet<&String> =
            self.physics_baseline.keys().chain(self.per_trip.keys()).collect();
        for id in ids {
            let cell = |m: &BTreeMap<String, f64>| m.get(id).map(|v| v.to_string()).unwrap_or_default();
            w.write_record([id.as_str(), &cell(&self.physics_baseline), &cell(&self.per_trip)])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(format!("{stem}.json"));
        let csv = dir.join(format!("{stem}.csv"));
        fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        fs::write(&csv, self.to_csv()?).map_err(|e| Error::io(&csv, e))?;
        Ok((json, csv))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> EvaluationReport {
        let per: BTreeMap<String, f64> = [("a".into(), 0.1), ("b".into(), 0.3)].into();
        let phys: BTreeMap<String, f64> = [("a".into(), 0.4), ("b".into(), 0.2), ("c".into(), 0.5)].into();
        let failed = vec![FoldFailure {
            trip_id: "c".into(),
            error: "boom".into(),
        }];
        EvaluationReport::new("boost".into(), per, phys, failed, 0)
    }

    #[test]
    fn summary_recomputes_from_per_trip() {
        let r = report();
        let s = r.summary.unwrap();
        assert_eq!((s.min, s.max), (0.1, 0.3));
        assert!((s.avg - 0.2).abs() < 1e-15);
        assert_eq!(r.n_failed(), 1);
    }

    #[test]
    fn csv_layout() {
        let text = report().to_csv().unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            ["trip_id,physics_ape,hybrid_ape", "a,0.4,0.1", "b,0.2,0.3", "c,0.5,"]
        );
    }

    #[test]
    fn json_round_trip() {
        let r = report();
        let back: EvaluationReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let (j, c) = report().write(dir.path(), "boost").unwrap();
        assert!(j.ends_with("boost.json") && c.ends_with("boost.csv"));
        assert!(fs::read_to_string(c).unwrap().starts_with("trip_id"));
    }
}
