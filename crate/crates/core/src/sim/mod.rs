//! Discrete structural causal model: cohort sampling and exact counterfactual oracles.

mod examples;
mod oracle;
mod sample;
mod spec;
mod truth;

pub use examples::{icu_analogue, readmission_analogue};
pub use oracle::{
    conditional_functional, observed_delta_probabilities, oracle_ground_truth_decomposition, oracle_po_curve, oracle_po_set,
    oracle_potential_outcome,
};
pub use sample::{sample_cohort, sample_cohort_with_latent, SampledCohort};
pub use spec::{Coupling, SCMSpec, TimeLaw};
pub use truth::OracleNuisances;
