//! Cross-fitted doubly-robust estimation of potential-outcome curves.

mod crossfit;
mod influence;

pub use crossfit::{analysis_view, crossfit_dr, crossfit_dr_with_folds, stratified_folds, DRCurveEstimate, DrConfig, DrDiagnostics, DrEstimate, FoldDiagnostics};
pub use influence::{IfComponents, IfContext, IfKind, IfNuisances, IfSettings, InfluenceEvaluation, NuTable, RowFlags};
