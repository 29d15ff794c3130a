//! Causal decomposition of time-resolved survival disparities.

pub mod cohort;
pub mod copula;
pub mod decompose;
pub mod dr;
pub mod error;
pub mod identify;
pub mod nuisance;
pub mod query;
pub mod scalar;
pub mod sim;
pub mod stats;
pub mod survival;

pub use cohort::{Cohort, Row};
pub use error::{Error, Result};
pub use query::{FunctionalKind, PotentialOutcomeQuery, Query};
pub use scalar::Real;

/// Survival, hazard or incidence curve in double precision.
pub type Curve = survival::StepCurve<f64>;
pub type Copula = copula::CopulaSpec<f64>;
pub type CgeResult = copula::CgeState<f64>;
pub type PoCurves = decompose::PoSet<f64>;
pub type Decomposition = decompose::DecompositionSeries<f64>;
