//! Archimedean copulas and the copula-graphic estimator.

mod archimedean;
mod cge;
mod routes;

pub use archimedean::{tau_to_theta, theta_to_tau, CopulaFamily, CopulaSpec, Inverse};
pub use cge::{cge_bounded, cge_bounded_values, cge_classical, CgeState};
pub use routes::{route1_conditional, route2_cif_bands, route2_population, CifBands, EffectEnvelope, EnvelopeConfig, Route1Estimate, Route2Curve, Route2Estimate};
