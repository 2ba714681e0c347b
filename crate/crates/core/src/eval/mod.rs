//! Hybrid prediction and its evaluation: terminal APE, leave-one-trip-out
//! cross-validation of corrective recipes, one-at-a-time hyperparameter
//! sweeps, and a synthetic panel generator with known components.

mod grid;
mod loocv;
mod metrics;
mod recipe;
mod report;
mod synthetic;

pub use grid::{grid_search, grid_to_csv, GridRow};
pub use loocv::loocv;
pub use metrics::{ape_terminal, hybrid_predict, summarize, Summary, APE_GUARD};
pub use recipe::{Recipe, RecipeConfig, RecipeKind, Target};
pub use report::{EvaluationReport, FoldFailure};
pub use synthetic::{generate_synthetic, temp_shape, time_shape, SyntheticConfig, TripTruth};
