//! Nuisance models: conditional survival, censoring and propensity.

mod model;
mod propensity;
mod tree;

use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::Result;
use crate::query::FunctionalKind;

pub use model::{fit_conditional_survival, ConditionalSurvivalModel, Fallback, FitReport, LearnerKind, Predicted, Target};
pub use propensity::{fit_propensity, Conditioning, PropensityLearner, PropensityModel, PropensityReport};
pub use tree::TreeParams;

/// Learner choices shared by the plug-in and doubly-robust estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NuisanceConfig {
    pub outcome_learner: LearnerKind,
    pub censoring_learner: LearnerKind,
    pub propensity: PropensityLearner,
    pub clip: f64,
    pub seed: u64,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        NuisanceConfig {
            outcome_learner: LearnerKind::Stratified,
            censoring_learner: LearnerKind::Stratified,
            propensity: PropensityLearner::FrequencyTable,
            clip: 0.01,
            seed: 0,
        }
    }
}

/// The model target the outcome regression needs for `functional`.
pub fn outcome_target(functional: FunctionalKind, n_causes: usize) -> Target {
    match functional {
        FunctionalKind::Cif { .. } | FunctionalKind::AllCauseSurvival if n_causes >= 2 => Target::Competing,
        _ => Target::Event,
    }
}

/// Fitted outcome, optional censoring, and the three propensity models.
#[derive(Debug)]
pub struct Nuisances {
    pub outcome: ConditionalSurvivalModel,
    pub censoring: Option<ConditionalSurvivalModel>,
    pub p_zw: PropensityModel,
    pub p_z: PropensityModel,
    pub p_marginal: PropensityModel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuisanceReport {
    pub outcome: FitReport,
    pub censoring: Option<FitReport>,
    pub propensity_zw: PropensityReport,
    pub propensity_z: PropensityReport,
    pub propensity_marginal: PropensityReport,
}

impl Nuisances {
    pub fn fit(cohort: &Cohort, target: Target, with_censoring: bool, config: &NuisanceConfig) -> Result<Self> {
        cohort.require_both_groups()?;
        let outcome = fit_conditional_survival(cohort, target, config.outcome_learner, config.seed)?;
        let censoring = if with_censoring {
            Some(fit_conditional_survival(cohort, Target::Censoring, config.censoring_learner, config.seed.wrapping_add(1))?)
        } else {
            None
        };
        Ok(Nuisances {
            outcome,
            censoring,
            p_zw: fit_propensity(cohort, Conditioning::ZW, config.propensity, config.clip)?,
            p_z: fit_propensity(cohort, Conditioning::Z, config.propensity, config.clip)?,
            p_marginal: fit_propensity(cohort, Conditioning::Marginal, config.propensity, config.clip)?,
        })
    }

    pub fn report(&self) -> NuisanceReport {
        NuisanceReport {
            outcome: self.outcome.report(),
            censoring: self.censoring.as_ref().map(|c| c.report()),
            propensity_zw: self.p_zw.report(),
            propensity_z: self.p_z.report(),
            propensity_marginal: self.p_marginal.report(),
        }
    }
}
