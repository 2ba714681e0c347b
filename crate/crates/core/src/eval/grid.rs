use serde::{Deserialize, Serialize};

use super::loocv::loocv;
use super::recipe::RecipeConfig;
use crate::dataset::PanelDataset;
use crate::error::{Error, Result};

/// One cell of a one-at-a-time sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub parameter: String,
    pub value: f64,
    pub min_error: Option<f64>,
    pub avg_error: Option<f64>,
    pub max_error: Option<f64>,
    pub failed_folds: usize,
}

/// Varies each named hyperparameter over its values with the others left
/// at `base`, running a full leave-one-trip-out evaluation per cell.
pub fn grid_search(
    panel: &PanelDataset,
    base: &RecipeConfig,
    grid: &[(String, Vec<f64>)],
    seed: u64,
) -> Result<Vec<GridRow>> {
    if grid.iter().all(|(_, values)| values.is_empty()) {
        return Err(Error::InvalidArgument("empty hyperparameter grid".into()));
    }
    let mut rows = Vec::new();
    for (name, values) in grid {
        for &value in values {
            let mut recipe = base.clone();
            recipe.set(name, value)?;
            let report = loocv(panel, &recipe, seed)?;
            log::info!("{} {name}={value}: avg {:?}", recipe.kind, report.avg());
            rows.push(GridRow {
                parameter: name.clone(),
                value,
                min_error: report.summary.map(|s| s.min),
                avg_error: report.summary.map(|s| s.avg),
                max_error: report.summary.map(|s| s.max),
                failed_folds: report.n_failed(),
            });
        }
    }
    Ok(rows)
}

/// `parameter,value,min_error,avg_error,max_error,failed_folds`.
pub fn grid_to_csv(rows: &[GridRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{generate_synthetic, RecipeKind, SyntheticConfig};
    use crate::mixed::Formula;
    use crate::physics::{annotate_panel, VehicleSpec, DEFAULT_SOC0};

    fn panel() -> PanelDataset {
        let cfg = SyntheticConfig {
            n_trips: 5,
            samples_per_trip: 30,
            ..Default::default()
        };
        let (p, _) = generate_synthetic(&cfg).unwrap();
        annotate_panel(&VehicleSpec::default(), &p, DEFAULT_SOC0).unwrap()
    }

    fn recipe() -> RecipeConfig {
        let mut r = RecipeConfig::new(RecipeKind::Forest, Formula::reduced("residual_phy"));
        r.forest.ntrees = 5;
        r
    }

    #[test]
    fn one_row_per_value() {
        let rows = grid_search(&panel(), &recipe(), &[("ntrees".into(), vec![3.0, 6.0])], 0).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].value, rows[1].value), (3.0, 6.0));
        let csv = grid_to_csv(&rows).unwrap();
        assert!(csv.starts_with("parameter,value,min_error,avg_error,max_error,failed_folds\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn defaults_only_matches_plain_loocv() {
        let p = panel();
        let r = recipe();
        let rows = grid_search(&p, &r, &[("ntrees".into(), vec![5.0])], 4).unwrap();
        let plain = loocv(&p, &r, 4).unwrap().summary.unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].avg_error, Some(plain.avg));
        assert_eq!(
            (rows[0].min_error, rows[0].max_error),
            (Some(plain.min), Some(plain.max))
        );
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(grid_search(&panel(), &recipe(), &[], 0).is_err());
        assert!(grid_search(&panel(), &recipe(), &[("ntrees".into(), vec![])], 0).is_err());
    }
}
