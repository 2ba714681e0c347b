//! Tree ensembles for clustered data: subject-bootstrap forests, residual
//! boosting with leave-subject-out stage selection, Pearson scale and
//! marginalization importance.

mod boost;
mod bootstrap;
mod forest;
mod importance;
mod scale;
mod tree;

pub use boost::{
    cv_curve, fit_boost, fit_boost_cv, leave_one_subject_out, select_boost_iterations, BoostParams, BoostedEnsemble,
};
pub use bootstrap::{draw_subjects, in_bag_rows, rows_by_subject, subject_bootstrap, SubjectDraw};
pub use forest::{fit_forest, Forest, ForestParams};
pub use importance::{importance_table, variable_importance, DEFAULT_MARGINAL_DRAWS};
pub use scale::pearson_scale;
pub use tree::{fit_tree, fit_tree_presorted, Node, Presorted, RegressionTree, TreeParams};
