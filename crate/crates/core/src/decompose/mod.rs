//! Pathway decompositions of potential-outcome curves.

mod cr;
mod series;

pub use cr::{decompose_cr, CrDecomposition};
pub use series::{decompose_difference, decompose_ratio, DecompositionSeries, Effect, EffectSeries, EstimatorKind, PoSet, Scale};
