use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::survival::{CurveKind, RiskTable, StepCurve};
use crate::Curve;

use super::tree::{TreeEnsemble, TreeParams};

/// Which time-to-event process a survival model describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Cause 1, with other causes and censoring as non-events.
    Event,
    /// Any cause.
    AllCause,
    /// Censoring (`delta = 0`) as the event; events at a tied time leave the risk set first.
    Censoring,
    /// All causes jointly: cause-specific incidences and all-cause survival.
    Competing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerKind {
    /// Product-limit fits per `(x, z, w)` stratum, with backoff for unseen strata.
    Stratified,
    /// Bagged log-rank survival trees.
    LogrankTreeEnsemble(TreeParams),
    /// A single exponential law for every row; `rate = None` fits the pooled MLE.
    /// Deliberately misspecified unless the data really are homogeneous exponential.
    ConstantHazard { rate: Option<f64> },
}

impl Default for LearnerKind {
    fn default() -> Self {
        LearnerKind::Stratified
    }
}

/// Level at which a stratified prediction was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    None,
    GroupConfounder,
    Group,
    Pooled,
}

/// Predicted curves for one covariate triple.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicted {
    /// Survival of the target process (all-cause survival for `Competing`).
    pub survival: Curve,
    pub cumulative_hazard: Curve,
    /// Cause-specific incidences; filled for the `Competing` target only.
    pub cif: Vec<Curve>,
    pub fallback: Fallback,
}

impl Predicted {
    pub(crate) fn from_table(table: &RiskTable<f64>, target: Target, fallback: Fallback) -> Result<Self> {
        let (survival, cumulative_hazard, cif) = match target {
            Target::Event => (table.kaplan_meier_cause(1)?, table.nelson_aalen_cause(1)?, Vec::new()),
            Target::AllCause => (table.all_cause_survival()?, table.nelson_aalen_all()?, Vec::new()),
            Target::Censoring => (table.censoring_survival()?, table.censoring_cumulative_hazard()?, Vec::new()),
            Target::Competing => {
                let cif = (1..=table.n_causes).map(|k| table.cif(k)).collect::<Result<Vec<_>>>()?;
                (table.all_cause_survival()?, table.nelson_aalen_all()?, cif)
            }
        };
        Ok(Predicted { survival, cumulative_hazard, cif, fallback })
    }

    /// Incidence of `cause`, or `1 - S` for single-process targets and cause 1.
    pub fn cif(&self, cause: usize) -> Result<Curve> {
        if let Some(c) = self.cif.get(cause.wrapping_sub(1)) {
            return Ok(c.clone());
        }
        if cause == 1 && self.cif.is_empty() {
            return self.survival.map(CurveKind::Cif, |s| 1.0 - s);
        }
        Err(Error::CauseOutOfRange { cause, n_causes: self.cif.len().max(1) })
    }

    /// Value of the cause-`k` incidence at `t` without allocating.
    pub fn cif_at(&self, cause: usize, t: f64) -> f64 {
        match self.cif.get(cause.wrapping_sub(1)) {
            Some(c) => c.at(t),
            None => 1.0 - self.survival.at(t),
        }
    }

    pub fn cif_left_limit(&self, cause: usize, t: f64) -> f64 {
        match self.cif.get(cause.wrapping_sub(1)) {
            Some(c) => c.left_limit(t),
            None => 1.0 - self.survival.left_limit(t),
        }
    }

    /// All-cause survival: `1 - sum_k CIF_k` when incidences are present.
    pub fn all_cause_at(&self, t: f64) -> f64 {
        if self.cif.is_empty() {
            self.survival.at(t)
        } else {
            (1.0 - self.cif.iter().map(|c| c.at(t)).sum::<f64>()).max(0.0)
        }
    }
}

/// Strata counts and backoff usage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub target: Target,
    pub learner: LearnerKind,
    pub n_rows: usize,
    pub n_events: usize,
    /// Rows per fitted stratum (stratified learner), keyed `x|z|w`.
    pub strata: BTreeMap<String, usize>,
    pub fallback_group_confounder: usize,
    pub fallback_group: usize,
    pub fallback_pooled: usize,
}

pub(crate) type Key = Vec<i64>;

pub(crate) fn code(v: f64) -> Result<i64> {
    if v.fract() != 0.0 || v.abs() >= 1e15 {
        return Err(Error::Schema(format!("covariate value {v} is not a discrete code")));
    }
    Ok(v as i64)
}

fn key_of(x: u8, z: &[f64], w: &[f64]) -> Result<Key> {
    let mut k = Vec::with_capacity(1 + z.len() + w.len());
    k.push(i64::from(x));
    for &v in z.iter().chain(w) {
        k.push(code(v)?);
    }
    Ok(k)
}

fn render(key: &[i64], z_dim: usize) -> String {
    let z: Vec<String> = key[1..1 + z_dim].iter().map(|v| v.to_string()).collect();
    let w: Vec<String> = key[1 + z_dim..].iter().map(|v| v.to_string()).collect();
    format!("{}|{}|{}", key[0], z.join(","), w.join(","))
}

#[derive(Debug)]
struct Stratified {
    z_dim: usize,
    full: BTreeMap<Key, Arc<Predicted>>,
    group_confounder: BTreeMap<Key, Arc<Predicted>>,
    group: BTreeMap<i64, Arc<Predicted>>,
    pooled: Arc<Predicted>,
}

fn table_for(cohort: &Cohort, idx: &[usize]) -> Result<RiskTable<f64>> {
    let times: Vec<f64> = idx.iter().map(|&i| cohort.times()[i]).collect();
    let deltas: Vec<u8> = idx.iter().map(|&i| cohort.deltas()[i]).collect();
    RiskTable::new(&times, &deltas, cohort.n_causes())
}

impl Stratified {
    fn fit(cohort: &Cohort, target: Target) -> Result<(Self, BTreeMap<String, usize>)> {
        let z_dim = cohort.z_dim();
        let mut by_full: BTreeMap<Key, Vec<usize>> = BTreeMap::new();
        let mut by_xz: BTreeMap<Key, Vec<usize>> = BTreeMap::new();
        let mut by_x: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, r) in cohort.rows().enumerate() {
            let k = key_of(r.x, r.z, r.w)?;
            by_xz.entry(k[..1 + z_dim].to_vec()).or_default().push(i);
            by_x.entry(k[0]).or_default().push(i);
            by_full.entry(k).or_default().push(i);
        }
        let fit_map = |m: &BTreeMap<Key, Vec<usize>>| -> Result<BTreeMap<Key, Arc<Predicted>>> {
            m.iter()
                .map(|(k, idx)| Ok((k.clone(), Arc::new(Predicted::from_table(&table_for(cohort, idx)?, target, Fallback::None)?))))
                .collect()
        };
        let full = fit_map(&by_full)?;
        let group_confounder = fit_map(&by_xz)?
            .into_iter()
            .map(|(k, p)| {
                let mut p = (*p).clone();
                p.fallback = Fallback::GroupConfounder;
                (k, Arc::new(p))
            })
            .collect();
        let group = by_x
            .iter()
            .map(|(k, idx)| Ok((*k, Arc::new(Predicted::from_table(&table_for(cohort, idx)?, target, Fallback::Group)?))))
            .collect::<Result<_>>()?;
        let all: Vec<usize> = (0..cohort.len()).collect();
        let pooled = Arc::new(Predicted::from_table(&table_for(cohort, &all)?, target, Fallback::Pooled)?);
        let strata = by_full.iter().map(|(k, v)| (render(k, z_dim), v.len())).collect();
        Ok((Stratified { z_dim, full, group_confounder, group, pooled }, strata))
    }

    fn predict(&self, x: u8, z: &[f64], w: &[f64]) -> Result<Arc<Predicted>> {
        let k = key_of(x, z, w)?;
        if let Some(p) = self.full.get(&k) {
            return Ok(p.clone());
        }
        if let Some(p) = self.group_confounder.get(&k[..1 + self.z_dim]) {
            return Ok(p.clone());
        }
        if let Some(p) = self.group.get(&k[0]) {
            return Ok(p.clone());
        }
        Ok(self.pooled.clone())
    }
}

#[derive(Debug)]
struct ConstantHazard {
    prediction: Arc<Predicted>,
}

impl ConstantHazard {
    fn fit(cohort: &Cohort, target: Target, rate: Option<f64>) -> Result<Self> {
        let exposure: f64 = cohort.times().iter().sum();
        let n_causes = cohort.n_causes();
        let counts = |pred: &dyn Fn(u8) -> bool| cohort.deltas().iter().filter(|&&d| pred(d)).count() as f64;
        let mle = |d: f64| if exposure > 0.0 { d / exposure } else { 0.0 };
        let mut times: Vec<f64> = cohort.times().iter().copied().filter(|&t| t > 0.0).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let rate_for = |pred: &dyn Fn(u8) -> bool| rate.unwrap_or_else(|| mle(counts(pred)));
        let build = |r: f64| -> Result<(Curve, Curve)> {
            let s = StepCurve::new_clamped(CurveKind::Survival, 1.0, times.clone(), times.iter().map(|t| (-r * t).exp()).collect())?;
            let h = StepCurve::new(CurveKind::CumulativeHazard, 0.0, times.clone(), times.iter().map(|t| r * t).collect())?;
            Ok((s, h))
        };
        let prediction = match target {
            Target::Event => {
                let (s, h) = build(rate_for(&|d| d == 1))?;
                Predicted { survival: s, cumulative_hazard: h, cif: Vec::new(), fallback: Fallback::Pooled }
            }
            Target::AllCause => {
                let (s, h) = build(rate_for(&|d| d >= 1))?;
                Predicted { survival: s, cumulative_hazard: h, cif: Vec::new(), fallback: Fallback::Pooled }
            }
            Target::Censoring => {
                let (s, h) = build(rate_for(&|d| d == 0))?;
                Predicted { survival: s, cumulative_hazard: h, cif: Vec::new(), fallback: Fallback::Pooled }
            }
            Target::Competing => {
                let rates: Vec<f64> = (1..=n_causes as u8).map(|k| rate.map_or_else(|| mle(counts(&|d| d == k)), |r| r / n_causes as f64)).collect();
                let total: f64 = rates.iter().sum();
                let (s, h) = build(total)?;
                let cif = rates
                    .iter()
                    .map(|&r| {
                        let share = if total > 0.0 { r / total } else { 0.0 };
                        StepCurve::new_clamped(CurveKind::Cif, 0.0, times.clone(), times.iter().map(|t| share * (1.0 - (-total * t).exp())).collect())
                    })
                    .collect::<Result<Vec<_>>>()?;
                Predicted { survival: s, cumulative_hazard: h, cif, fallback: Fallback::Pooled }
            }
        };
        Ok(ConstantHazard { prediction: Arc::new(prediction) })
    }
}

#[derive(Debug)]
enum Inner {
    Stratified(Stratified),
    Tree(TreeEnsemble),
    Constant(ConstantHazard),
}

/// Conditional survival model `S(t | x, z, w)` for one target process.
#[derive(Debug)]
pub struct ConditionalSurvivalModel {
    target: Target,
    learner: LearnerKind,
    z_dim: usize,
    w_dim: usize,
    n_causes: usize,
    inner: Inner,
    report: FitReport,
    fallbacks: [AtomicUsize; 3],
    cache: RwLock<HashMap<Vec<u64>, Arc<Predicted>>>,
}

/// Fits `target` on `cohort` with `learner`; `seed` drives the tree ensemble's bootstrap.
pub fn fit_conditional_survival(cohort: &Cohort, target: Target, learner: LearnerKind, seed: u64) -> Result<ConditionalSurvivalModel> {
    if cohort.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let n_events = cohort
        .deltas()
        .iter()
        .filter(|&&d| match target {
            Target::Event => d == 1,
            Target::AllCause | Target::Competing => d >= 1,
            Target::Censoring => d == 0,
        })
        .count();
    let mut strata = BTreeMap::new();
    let inner = match learner {
        LearnerKind::Stratified => {
            if !cohort.covariates_discrete() {
                return Err(Error::Schema("stratified learner requires discrete covariates".into()));
            }
            let (s, st) = Stratified::fit(cohort, target)?;
            strata = st;
            Inner::Stratified(s)
        }
        LearnerKind::LogrankTreeEnsemble(params) => Inner::Tree(TreeEnsemble::fit(cohort, target, params, seed)?),
        LearnerKind::ConstantHazard { rate } => {
            if let Some(r) = rate {
                if !(r >= 0.0 && r.is_finite()) {
                    return Err(Error::InvalidParameter(format!("hazard rate {r} must be nonnegative")));
                }
            }
            Inner::Constant(ConstantHazard::fit(cohort, target, rate)?)
        }
    };
    Ok(ConditionalSurvivalModel {
        target,
        learner,
        z_dim: cohort.z_dim(),
        w_dim: cohort.w_dim(),
        n_causes: cohort.n_causes(),
        inner,
        report: FitReport {
            target,
            learner,
            n_rows: cohort.len(),
            n_events,
            strata,
            fallback_group_confounder: 0,
            fallback_group: 0,
            fallback_pooled: 0,
        },
        fallbacks: Default::default(),
        cache: RwLock::new(HashMap::new()),
    })
}

impl ConditionalSurvivalModel {
    pub fn target(&self) -> Target {
        self.target
    }

    pub fn learner(&self) -> LearnerKind {
        self.learner
    }

    pub fn n_causes(&self) -> usize {
        self.n_causes
    }

    /// Predicted curves for one covariate triple.
    pub fn predict(&self, x: u8, z: &[f64], w: &[f64]) -> Result<Arc<Predicted>> {
        if z.len() != self.z_dim || w.len() != self.w_dim || x > 1 {
            return Err(Error::Schema(format!(
                "covariates (x={x}, {} z, {} w) do not match the fitted schema ({} z, {} w)",
                z.len(),
                w.len(),
                self.z_dim,
                self.w_dim
            )));
        }
        let p = match &self.inner {
            Inner::Stratified(s) => s.predict(x, z, w)?,
            Inner::Constant(c) => return Ok(c.prediction.clone()),
            Inner::Tree(t) => {
                let key: Vec<u64> = std::iter::once(f64::from(x)).chain(z.iter().copied()).chain(w.iter().copied()).map(f64::to_bits).collect();
                if let Some(p) = self.cache.read().expect("cache lock").get(&key) {
                    return Ok(p.clone());
                }
                let p = Arc::new(t.predict(x, z, w)?);
                self.cache.write().expect("cache lock").entry(key).or_insert(p).clone()
            }
        };
        match p.fallback {
            Fallback::None => {}
            Fallback::GroupConfounder => {
                self.fallbacks[0].fetch_add(1, Ordering::Relaxed);
            }
            Fallback::Group => {
                self.fallbacks[1].fetch_add(1, Ordering::Relaxed);
            }
            Fallback::Pooled => {
                self.fallbacks[2].fetch_add(1, Ordering::Relaxed);
            }
        }
        Ok(p)
    }

    /// `(t, Lambda_C(t) - Lambda_C(t_prev))` on `grid`; the model must target censoring.
    pub fn predict_censoring_hazard_increments(&self, x: u8, z: &[f64], w: &[f64], grid: &[f64]) -> Result<Vec<(f64, f64)>> {
        if self.target != Target::Censoring {
            return Err(Error::InvalidParameter("censoring hazard increments need a censoring-target model".into()));
        }
        let p = self.predict(x, z, w)?;
        let mut prev = 0.0;
        Ok(grid
            .iter()
            .map(|&t| {
                let h = p.cumulative_hazard.at(t);
                let d = (h - prev).max(0.0);
                prev = h;
                (t, d)
            })
            .collect())
    }

    /// Smallest tree leaf, counting bootstrap rows with multiplicity; `None` for other learners.
    pub fn min_leaf_size(&self) -> Option<usize> {
        match &self.inner {
            Inner::Tree(t) => Some(t.min_leaf_size()),
            _ => None,
        }
    }

    /// Fit report including the backoff counts accumulated by predictions so far.
    pub fn report(&self) -> FitReport {
        let mut r = self.report.clone();
        r.fallback_group_confounder = self.fallbacks[0].load(Ordering::Relaxed);
        r.fallback_group = self.fallbacks[1].load(Ordering::Relaxed);
        r.fallback_pooled = self.fallbacks[2].load(Ordering::Relaxed);
        r
    }
}
