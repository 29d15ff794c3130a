use std::collections::BTreeMap;

use serde::Serialize;

use crate::cohort::Cohort;
use crate::decompose::{EstimatorKind, PoSet};
use crate::error::{Error, Result};
use crate::nuisance::{outcome_target, NuisanceConfig, Nuisances, Predicted, PropensityModel};
use crate::query::{FunctionalKind, Query};
use crate::stats::{isotonic_decreasing, isotonic_increasing};
use crate::survival::{CurveKind, StepCurve};
use crate::Curve;

use super::grid::check_grid;

/// What post-processing touched a plug-in curve.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PluginDiagnostics {
    /// Values pulled back into `[0, 1]`.
    pub clamped: usize,
    pub isotonic_applied: bool,
    /// Sup distance between the raw and projected curve.
    pub projection_distance: f64,
    /// Empirical mean of the weight product over rows.
    pub weight_mean: f64,
    /// Rows dropped because their outcome prediction was not finite.
    pub excluded_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoEstimate {
    pub query: Query,
    pub functional: FunctionalKind,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub diagnostics: PluginDiagnostics,
}

impl PoEstimate {
    /// The estimate as a step curve on its grid; `None` for RMST, which is not a step function.
    pub fn curve(&self) -> Option<Result<Curve>> {
        let kind = match self.functional {
            FunctionalKind::Survival | FunctionalKind::AllCauseSurvival => CurveKind::Survival,
            FunctionalKind::Cif { .. } => CurveKind::Cif,
            FunctionalKind::CumulativeHazard => CurveKind::CumulativeHazard,
            FunctionalKind::Rmst { .. } => return None,
        };
        let start = if kind == CurveKind::Survival { 1.0 } else { 0.0 };
        Some(StepCurve::new_clamped(kind, start, self.grid.clone(), self.values.clone()))
    }
}

/// `Phi(t)` read off one predicted curve bundle.
pub(crate) fn functional_value(p: &Predicted, functional: FunctionalKind, t: f64) -> f64 {
    match functional {
        FunctionalKind::Survival => p.survival.at(t),
        FunctionalKind::Cif { cause } => p.cif_at(cause, t),
        FunctionalKind::AllCauseSurvival => p.all_cause_at(t),
        FunctionalKind::CumulativeHazard => p.cumulative_hazard.at(t),
        FunctionalKind::Rmst { horizon } => p.survival.integral(t.min(horizon)),
    }
}

/// Rows grouped by their `(z, w)` values, in a fixed order.
pub(crate) struct CovariateGroups {
    pub keys: Vec<(Vec<f64>, Vec<f64>)>,
    pub counts: Vec<usize>,
    pub members: Vec<Vec<usize>>,
}

impl CovariateGroups {
    pub fn new(cohort: &Cohort) -> Self {
        let mut map: BTreeMap<Vec<u64>, (Vec<f64>, Vec<f64>, Vec<usize>)> = BTreeMap::new();
        for (i, r) in cohort.rows().enumerate() {
            let k: Vec<u64> = r.z.iter().chain(r.w).map(|v| v.to_bits()).collect();
            map.entry(k).or_insert_with(|| (r.z.to_vec(), r.w.to_vec(), Vec::new())).2.push(i);
        }
        let mut out = CovariateGroups { keys: Vec::new(), counts: Vec::new(), members: Vec::new() };
        for (_, (z, w, m)) in map {
            out.keys.push((z, w));
            out.counts.push(m.len());
            out.members.push(m);
        }
        out
    }
}

/// Weight `P(x_w | z, w) / P(x_w | z) * P(x_z | z) / P(x_z)` for one covariate value.
pub(crate) fn mediation_weight(p_zw: &PropensityModel, p_z: &PropensityModel, p_m: &PropensityModel, q: Query, z: &[f64], w: &[f64]) -> Result<f64> {
    Ok(p_zw.predict(q.x_w, z, w)? / p_z.predict(q.x_w, z, w)? * p_z.predict(q.x_z, z, w)? / p_m.predict(q.x_z, z, w)?)
}

/// Weighted mean over rows of an outcome function evaluated on `grid` at `x = x_y`.
pub(crate) fn weighted_plugin(
    cohort: &Cohort,
    p_zw: &PropensityModel,
    p_z: &PropensityModel,
    p_m: &PropensityModel,
    query: Query,
    functional: FunctionalKind,
    grid: &[f64],
    outcome: impl Fn(u8, &[f64], &[f64]) -> Result<Vec<f64>>,
) -> Result<PoEstimate> {
    check_grid(grid)?;
    let groups = CovariateGroups::new(cohort);
    let n = cohort.len() as f64;
    let mut acc = vec![0.0; grid.len()];
    let mut weight_sum = 0.0;
    let mut excluded = 0;
    for ((z, w), &count) in groups.keys.iter().zip(&groups.counts) {
        let weight = mediation_weight(p_zw, p_z, p_m, query, z, w)?;
        weight_sum += weight * count as f64;
        let f = outcome(query.x_y, z, w)?;
        if f.iter().any(|v| !v.is_finite()) {
            excluded += count;
            continue;
        }
        for (a, v) in acc.iter_mut().zip(&f) {
            *a += count as f64 * weight * v;
        }
    }
    let raw: Vec<f64> = acc.into_iter().map(|a| a / n).collect();
    let mut diagnostics = PluginDiagnostics { weight_mean: weight_sum / n, excluded_rows: excluded, ..Default::default() };
    let values = postprocess(raw, functional, &mut diagnostics);
    Ok(PoEstimate { query, functional, grid: grid.to_vec(), values, diagnostics })
}

/// Clamps probabilities to `[0, 1]` and projects onto the monotone cone when needed.
pub(crate) fn postprocess(mut values: Vec<f64>, functional: FunctionalKind, diag: &mut PluginDiagnostics) -> Vec<f64> {
    if functional.is_probability() {
        for v in values.iter_mut() {
            if *v < 0.0 || *v > 1.0 {
                *v = v.clamp(0.0, 1.0);
                diag.clamped += 1;
            }
        }
    }
    let ones = vec![1.0; values.len()];
    let decreasing = functional.is_survival_like();
    let monotone = values.windows(2).all(|w| if decreasing { w[1] <= w[0] } else { w[1] >= w[0] });
    if !monotone {
        let projected = if decreasing { isotonic_decreasing(&values, &ones) } else { isotonic_increasing(&values, &ones) };
        diag.isotonic_applied = true;
        diag.projection_distance = values.iter().zip(&projected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        values = projected;
    }
    values
}

/// Model-based weighted estimator of `E[Phi_{x_y, W_{x_w}}(t) | X = x_z]` on `grid`.
pub fn plugin_po(nuisances: &Nuisances, cohort: &Cohort, query: Query, functional: FunctionalKind, grid: &[f64]) -> Result<PoEstimate> {
    functional.validate(cohort.n_causes())?;
    let expected = outcome_target(functional, cohort.n_causes());
    if nuisances.outcome.target() != expected {
        return Err(Error::Schema(format!("outcome model targets {:?}, functional needs {:?}", nuisances.outcome.target(), expected)));
    }
    weighted_plugin(cohort, &nuisances.p_zw, &nuisances.p_z, &nuisances.p_marginal, query, functional, grid, |x, z, w| {
        let p = nuisances.outcome.predict(x, z, w)?;
        Ok(grid.iter().map(|&t| functional_value(&p, functional, t)).collect())
    })
}

/// Plug-in curves for several queries sharing one set of nuisances.
pub fn plugin_po_set(nuisances: &Nuisances, cohort: &Cohort, queries: &[Query], functional: FunctionalKind, grid: &[f64]) -> Result<(PoSet<f64>, Vec<PluginDiagnostics>)> {
    let mut set = PoSet::new(grid.to_vec(), functional, EstimatorKind::Plugin);
    let mut diags = Vec::with_capacity(queries.len());
    for &q in queries {
        let est = plugin_po(nuisances, cohort, q, functional, grid)?;
        set.insert(q, est.values)?;
        diags.push(est.diagnostics);
    }
    Ok((set, diags))
}

/// Fits nuisances on `cohort` and returns plug-in curves for `queries`.
pub fn fit_plugin(cohort: &Cohort, queries: &[Query], functional: FunctionalKind, grid: &[f64], config: &NuisanceConfig) -> Result<(PoSet<f64>, Nuisances, Vec<PluginDiagnostics>)> {
    let nuisances = Nuisances::fit(cohort, outcome_target(functional, cohort.n_causes()), false, config)?;
    let (set, diags) = plugin_po_set(&nuisances, cohort, queries, functional, grid)?;
    Ok((set, nuisances, diags))
}
