use std::collections::BTreeMap;

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::nuisance::{fit_conditional_survival, outcome_target, ConditionalSurvivalModel, LearnerKind};
use crate::query::{FunctionalKind, Query};
use crate::sim::{Coupling, SCMSpec, TimeLaw};

use super::grid::check_grid;
use super::plugin::{functional_value, postprocess, PluginDiagnostics, PoEstimate};

/// Empirical tables of a cohort with single-column discrete `Z` and `W`:
/// `P(x, z)`, `P(w | x, z)` and stratified outcome curves.
#[derive(Debug)]
pub struct FittedTables {
    pub z_support: Vec<f64>,
    pub w_support: Vec<f64>,
    /// `p_xz[x][zi]`.
    pub p_xz: [Vec<f64>; 2],
    /// `p_w[x][zi][wi]`; uniform where `P(x, z) = 0`.
    pub p_w: [Vec<Vec<f64>>; 2],
    pub functional: FunctionalKind,
    pub outcome: ConditionalSurvivalModel,
}

fn support(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

impl FittedTables {
    pub fn fit(cohort: &Cohort, functional: FunctionalKind) -> Result<Self> {
        if cohort.z_dim() != 1 || cohort.w_dim() != 1 || !cohort.covariates_discrete() {
            return Err(Error::Schema("exact summation needs single-column discrete z and w".into()));
        }
        functional.validate(cohort.n_causes())?;
        cohort.require_both_groups()?;
        let zs: Vec<f64> = cohort.rows().map(|r| r.z[0]).collect();
        let ws: Vec<f64> = cohort.rows().map(|r| r.w[0]).collect();
        let z_support = support(&zs);
        let w_support = support(&ws);
        let (nz, nw) = (z_support.len(), w_support.len());
        let zi = |z: f64| z_support.partition_point(|&v| v < z);
        let wi = |w: f64| w_support.partition_point(|&v| v < w);
        let mut c_xz = [vec![0usize; nz], vec![0usize; nz]];
        let mut c_xzw = [vec![vec![0usize; nw]; nz], vec![vec![0usize; nw]; nz]];
        for r in cohort.rows() {
            let (a, b) = (zi(r.z[0]), wi(r.w[0]));
            c_xz[r.x as usize][a] += 1;
            c_xzw[r.x as usize][a][b] += 1;
        }
        let n = cohort.len() as f64;
        let p_xz = [0, 1].map(|x| c_xz[x].iter().map(|&c| c as f64 / n).collect::<Vec<_>>());
        let p_w = [0, 1].map(|x| {
            (0..nz)
                .map(|a| {
                    let tot = c_xz[x][a];
                    (0..nw)
                        .map(|b| if tot == 0 { 1.0 / nw as f64 } else { c_xzw[x][a][b] as f64 / tot as f64 })
                        .collect()
                })
                .collect()
        });
        let outcome = fit_conditional_survival(cohort, outcome_target(functional, cohort.n_causes()), LearnerKind::Stratified, 0)?;
        Ok(FittedTables { z_support, w_support, p_xz, p_w, functional, outcome })
    }

    fn p_z_given_x(&self, x: u8) -> Result<Vec<f64>> {
        let row = &self.p_xz[x as usize];
        let tot: f64 = row.iter().sum();
        if tot <= 0.0 {
            return Err(Error::DegenerateGroup(format!("no rows with x = {x}")));
        }
        Ok(row.iter().map(|p| p / tot).collect())
    }

    /// An SCM whose tables are these fitted tables and whose primary event law per
    /// `(x, z, w)` has the stratified curve's jumps as its probability mass.
    /// Single-cause functionals only.
    pub fn to_spec(&self) -> Result<SCMSpec> {
        if self.outcome.n_causes() != 1 {
            return Err(Error::InvalidParameter("spec conversion supports a single cause".into()));
        }
        let mut laws = BTreeMap::new();
        for x in 0..2u8 {
            for &z in &self.z_support {
                for &w in &self.w_support {
                    let p = self.outcome.predict(x, &[z], &[w])?;
                    let s = &p.survival;
                    let mut prev = 1.0;
                    let mut probs = Vec::with_capacity(s.values().len());
                    for &v in s.values() {
                        probs.push(prev - v);
                        prev = v;
                    }
                    let total: f64 = probs.iter().sum::<f64>() + prev;
                    prev += 1.0 - total;
                    laws.insert((x, z.to_bits(), w.to_bits()), TimeLaw { times: s.breakpoints().to_vec(), probs, never: prev.max(0.0) });
                }
            }
        }
        let horizon = laws.values().flat_map(|l: &TimeLaw| l.times.last().copied()).fold(0.0, f64::max) + 1.0;
        let zi = |z: f64| self.z_support.partition_point(|&v| v < z);
        let wi = |w: f64| self.w_support.partition_point(|&v| v < w);
        let total_xz: f64 = self.p_xz.iter().flatten().sum();
        SCMSpec::from_fn(
            self.z_support.clone(),
            self.w_support.clone(),
            1,
            |x, z| self.p_xz[x as usize][zi(z)] / total_xz,
            |x, z, w| self.p_w[x as usize][zi(z)][wi(w)],
            |x, z, w, _| laws[&(x, z.to_bits(), w.to_bits())].clone(),
            |_, _, _| TimeLaw::point(horizon),
            Coupling::default(),
        )
    }
}

/// `sum_{z,w} f(x_y, z, w; t) P(w | x_w, z) P(z | x_z)` over fitted tables.
pub fn exact_plugin_po(tables: &FittedTables, query: Query, grid: &[f64]) -> Result<PoEstimate> {
    check_grid(grid)?;
    let functional = tables.functional;
    let pz = tables.p_z_given_x(query.x_z)?;
    let mut values = vec![0.0; grid.len()];
    for (a, &z) in tables.z_support.iter().enumerate() {
        if pz[a] == 0.0 {
            continue;
        }
        for (b, &w) in tables.w_support.iter().enumerate() {
            let pw = tables.p_w[query.x_w as usize][a][b];
            if pw == 0.0 {
                continue;
            }
            let p = tables.outcome.predict(query.x_y, &[z], &[w])?;
            for (v, &t) in values.iter_mut().zip(grid) {
                *v += functional_value(&p, functional, t) * pw * pz[a];
            }
        }
    }
    let mut diagnostics = PluginDiagnostics { weight_mean: 1.0, ..Default::default() };
    let values = postprocess(values, functional, &mut diagnostics);
    Ok(PoEstimate { query, functional, grid: grid.to_vec(), values, diagnostics })
}
