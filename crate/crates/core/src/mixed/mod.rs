//! Mixed-model machinery for clustered trip data: the random-intercept null
//! model and its ICC, truncated-linear penalized splines, and additive
//! mixed models (Gaussian or Student-t response) fitted by penalized least
//! squares with variance-component smoothing selection.

mod criteria;
mod density;
mod formula;
mod gamm;
mod null_lmm;
mod pls;
mod spline;

pub use criteria::{aic, bic, select_by_criterion};
pub use density::{gaussian_logdensity, student_t_logdensity, student_t_weight};
pub use formula::{ByTerm, Formula, SmoothTerm};
pub use gamm::{
    fit_gamm, or_last_iterate, predict_gamm, Family, FamilyKind, FitSummary, GammFit, GammOptions, SmoothBlock,
    SmoothInput, NU_GRID,
};
pub use null_lmm::{fit_null_lmm, fit_null_lmm_groups, icc, VarianceComponents};
pub use pls::PenalizedLeastSquares;
pub use spline::{spline_basis, SplineBasis};
