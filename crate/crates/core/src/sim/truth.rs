//! True nuisance functions of a spec, for evaluating influence functions at the truth.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::dr::{IfNuisances, NuTable};
use crate::error::{Error, Result};
use crate::nuisance::{Conditioning, Fallback, Predicted};
use crate::query::{FunctionalKind, Query};
use crate::survival::{CurveKind, StepCurve};

use super::oracle::conditional_functional;
use super::spec::{SCMSpec, TimeLaw};

/// The spec's own outcome, censoring and propensity functions.
///
/// Requires the independence coupling: under dependent censoring the
/// observed-data censoring law is not the latent one.
#[derive(Debug)]
pub struct OracleNuisances<'a> {
    spec: &'a SCMSpec,
    cache: RwLock<HashMap<(u8, u64, u64, bool), Arc<Predicted>>>,
}

fn survival_curve(law: &TimeLaw) -> Result<StepCurve<f64>> {
    StepCurve::new_clamped(CurveKind::Survival, 1.0, law.times.clone(), law.survival_at_support())
}

/// Cumulative discrete hazard `sum_{u <= t} P(T = u) / P(T >= u)` of a survival curve.
fn hazard_curve(s: &StepCurve<f64>) -> Result<StepCurve<f64>> {
    let mut prev = s.value_at_zero();
    let mut acc = 0.0;
    let mut vals = Vec::with_capacity(s.values().len());
    for &v in s.values() {
        if prev > 0.0 {
            acc += (prev - v) / prev;
        }
        prev = v;
        vals.push(acc);
    }
    StepCurve::new(CurveKind::CumulativeHazard, 0.0, s.breakpoints().to_vec(), vals)
}

impl<'a> OracleNuisances<'a> {
    pub fn new(spec: &'a SCMSpec) -> Result<Self> {
        if spec.coupling.tau != 0.0 {
            return Err(Error::InvalidParameter("true nuisances need the independence coupling".into()));
        }
        Ok(OracleNuisances { spec, cache: RwLock::new(HashMap::new()) })
    }

    fn build(&self, x: u8, z: f64, w: f64, censoring: bool) -> Result<Predicted> {
        let spec = self.spec;
        if censoring {
            let survival = survival_curve(spec.censor_law(x, z, w))?;
            let cumulative_hazard = hazard_curve(&survival)?;
            return Ok(Predicted { survival, cumulative_hazard, cif: Vec::new(), fallback: Fallback::None });
        }
        if spec.n_causes == 1 {
            let survival = survival_curve(spec.event_law(x, z, w, 1))?;
            let cumulative_hazard = hazard_curve(&survival)?;
            return Ok(Predicted { survival, cumulative_hazard, cif: Vec::new(), fallback: Fallback::None });
        }
        let support = spec.event_time_support();
        let at = |f: FunctionalKind| support.iter().map(|&t| conditional_functional(spec, x, z, w, f, t)).collect::<Result<Vec<_>>>();
        let survival = StepCurve::new_clamped(CurveKind::Survival, 1.0, support.clone(), at(FunctionalKind::AllCauseSurvival)?)?;
        let cumulative_hazard = hazard_curve(&survival)?;
        let cif = (1..=spec.n_causes)
            .map(|k| StepCurve::new_clamped(CurveKind::Cif, 0.0, support.clone(), at(FunctionalKind::Cif { cause: k })?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Predicted { survival, cumulative_hazard, cif, fallback: Fallback::None })
    }

    fn get(&self, x: u8, z: &[f64], w: &[f64], censoring: bool) -> Result<Arc<Predicted>> {
        let (z, w) = (scalar(z)?, scalar(w)?);
        let key = (x, z.to_bits(), w.to_bits(), censoring);
        if let Some(p) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(p.clone());
        }
        let p = Arc::new(self.build(x, z, w, censoring)?);
        self.cache.write().expect("cache lock").insert(key, p.clone());
        Ok(p)
    }

    /// `nu(z) = sum_w E[Phi | x_y, z, w] P(w | x_w, z)` on `grid` for every `z` in the support.
    pub fn nu_table(&self, query: Query, functional: FunctionalKind, grid: &[f64]) -> Result<NuTable> {
        let spec = self.spec;
        let mut values = Vec::with_capacity(spec.z_support.len());
        for &z in &spec.z_support {
            let mut nu = vec![0.0; grid.len()];
            for &w in &spec.w_support {
                let pw = spec.p_w_given_xz(query.x_w, z, w);
                if pw == 0.0 {
                    continue;
                }
                for (v, &t) in nu.iter_mut().zip(grid) {
                    *v += pw * conditional_functional(spec, query.x_y, z, w, functional, t)?;
                }
            }
            values.push((vec![z], nu));
        }
        NuTable::from_values(values)
    }
}

fn scalar(v: &[f64]) -> Result<f64> {
    match v {
        [a] => Ok(*a),
        _ => Err(Error::InvalidParameter(format!("spec covariates are scalar, got {} columns", v.len()))),
    }
}

impl IfNuisances for OracleNuisances<'_> {
    fn outcome(&self, x: u8, z: &[f64], w: &[f64]) -> Result<Arc<Predicted>> {
        self.get(x, z, w, false)
    }

    fn censoring(&self, x: u8, z: &[f64], w: &[f64]) -> Result<Option<Arc<Predicted>>> {
        self.get(x, z, w, true).map(Some)
    }

    fn propensity(&self, conditioning: Conditioning, x: u8, z: &[f64], w: &[f64]) -> Result<f64> {
        let spec = self.spec;
        let (z, w) = (scalar(z)?, scalar(w)?);
        let joint = |g: u8| match conditioning {
            Conditioning::Marginal => spec.p_x(g),
            Conditioning::Z => spec.p_xz(g, z),
            Conditioning::ZW => spec.p_xz(g, z) * spec.p_w_given_xz(g, z, w),
        };
        let total = joint(0) + joint(1);
        if total <= 0.0 {
            return Err(Error::DegenerateGroup(format!("covariate value (z = {z}, w = {w}) has zero probability")));
        }
        Ok(joint(x) / total)
    }
}
