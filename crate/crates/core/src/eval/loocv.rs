use std::collections::BTreeMap;

use super::metrics::{ape_terminal, hybrid_predict};
use super::recipe::{Recipe, Target};
use super::report::{EvaluationReport, FoldFailure};
use crate::dataset::{channel, DesignLayout, PanelDataset, TripSeries};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::derive_seed;

struct Fold {
    hybrid_ape: Result<f64>,
    leaked: usize,
}

fn terminal(trip: &TripSeries, name: &str) -> Result<f64> {
    trip.require(name)?
        .last()
        .copied()
        .ok_or_else(|| Error::DegenerateTrip {
            trip: trip.trip_id().to_string(),
            reason: "no samples".into(),
        })
}

/// Trains on every trip but `held` and returns the hybrid terminal APE of
/// `held`, plus the number of training rows that came from `held`.
fn run_fold(panel: &PanelDataset, held: &TripSeries, recipe: &dyn Recipe, seed: u64) -> Fold {
    let mut leaked = 0;
    let mut attempt = || -> Result<f64> {
        let y_t = terminal(held, channel::MEASURED_ENERGY)?;
        let phys_t = terminal(held, channel::PHYS_PRED)?;
        let target = recipe.target();
        let Some(response) = target.channel() else {
            return ape_terminal(y_t, phys_t);
        };
        let train_panel = panel.filter(|t| t.trip_id() != held.trip_id())?;
        let layout = DesignLayout::fit(&train_panel, &recipe.features())?;
        let train = layout.assemble(train_panel.trips(), Some(response))?;
        leaked = train.subject_of_row.iter().filter(|s| *s == held.trip_id()).count();
        let model = recipe.fit(&train, seed)?;
        let test = layout.assemble(std::iter::once(held), None)?;
        let f_t = *model.predict(&test)?.last().ok_or_else(|| Error::DegenerateTrip {
            trip: held.trip_id().to_string(),
            reason: "no samples".into(),
        })?;
        let estimate = match target {
            Target::Energy => f_t,
            _ => hybrid_predict(phys_t, f_t),
        };
        ape_terminal(y_t, estimate)
    };
    let hybrid_ape = attempt();
    Fold { hybrid_ape, leaked }
}

/// Leave-one-trip-out cross-validation of `recipe` on a panel carrying
/// `measured_energy`, `phys_pred` and the recipe's target channel.
///
/// Folds run in parallel, each with its own seed derived from `seed`. A
/// failing fold is recorded in the report and left out of the summary.
pub fn loocv(panel: &PanelDataset, recipe: &dyn Recipe, seed: u64) -> Result<EvaluationReport> {
    if panel.len() < 2 {
        return Err(Error::Identifiability(format!(
            "cross-validation needs at least 2 trips, got {}",
            panel.len()
        )));
    }
    let mut physics = BTreeMap::new();
    for trip in panel.trips() {
        let y_t = terminal(trip, channel::MEASURED_ENERGY)?;
        let phys_t = terminal(trip, channel::PHYS_PRED)?;
        match ape_terminal(y_t, phys_t) {
            Ok(a) => {
                physics.insert(trip.trip_id().to_string(), a);
            }
            Err(e) => log::warn!("trip `{}`: {e}", trip.trip_id()),
        }
    }
    let folds = par::map_range(panel.len(), |i| {
        run_fold(panel, &panel.trips()[i], recipe, derive_seed(seed, i as u64))
    });
    let mut per_trip = BTreeMap::new();
    let mut failed = Vec::new();
    let mut leaked = 0;
    for (trip, fold) in panel.trips().iter().zip(folds) {
        leaked += fold.leaked;
        match fold.hybrid_ape {
            Ok(a) => {
                per_trip.insert(trip.trip_id().to_string(), a);
            }
            Err(e) => {
                log::warn!("fold `{}` failed: {e}", trip.trip_id());
                failed.push(FoldFailure {
                    trip_id: trip.trip_id().to_string(),
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(EvaluationReport::new(recipe.tag(), per_trip, physics, failed, leaked))
}
