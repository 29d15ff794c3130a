//! Nonparametric survival primitives shared by every estimator.

mod curve;
mod estimators;

pub use curve::{union_breakpoints, CurveKind, StepCurve};
pub use estimators::{aalen_johansen_cif, all_cause_survival, kaplan_meier, nelson_aalen, RiskTable};
