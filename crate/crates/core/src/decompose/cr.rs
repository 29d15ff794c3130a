use std::io::Write;

use serde::Serialize;

use crate::cohort::Cohort;
use crate::dr::{crossfit_dr, DrConfig, DrDiagnostics};
use crate::error::{Error, Result};
use crate::identify::plugin_po_set;
use crate::nuisance::{Nuisances, Target};
use crate::query::{FunctionalKind, Query};

use super::series::{decompose_difference, DecompositionSeries, EstimatorKind, PoSet};

/// Per-cause incidence decompositions and the all-cause survival decomposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrDecomposition {
    pub causes: Vec<usize>,
    pub per_cause: Vec<DecompositionSeries<f64>>,
    pub all_cause: DecompositionSeries<f64>,
    pub curves: Vec<PoSet<f64>>,
    pub dr_diagnostics: Vec<DrDiagnostics>,
}

impl CrDecomposition {
    /// Every series in one long table, effects prefixed by `cif<k>_` or `all_cause_`.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "t,effect,estimate,se,lo,hi")?;
        for (k, s) in self.causes.iter().zip(&self.per_cause) {
            s.write_rows(&mut out, &format!("cif{k}_"))?;
        }
        self.all_cause.write_rows(&mut out, "all_cause_")
    }

    /// Largest `|sum_k TV_k(t) + TV_all(t)|`; zero when the causes listed are all the causes.
    pub fn normalization_residual(&self) -> f64 {
        let tv_all = self.all_cause.total();
        (0..tv_all.len())
            .map(|j| (self.per_cause.iter().map(|s| s.total()[j]).sum::<f64>() + tv_all[j]).abs())
            .fold(0.0, f64::max)
    }
}

/// Decompositions of each cause's incidence and of all-cause survival for
/// `x0 -> x1`. Plug-in estimates share one competing-risk nuisance fit.
pub fn decompose_cr(
    cohort: &Cohort,
    x0: u8,
    x1: u8,
    causes: Option<&[usize]>,
    estimator: EstimatorKind,
    grid: &[f64],
    config: &DrConfig,
) -> Result<CrDecomposition> {
    let k_max = cohort.n_causes();
    if k_max < 2 {
        return Err(Error::InvalidParameter(format!("competing-risk decomposition needs at least 2 causes, cohort has {k_max}")));
    }
    let causes: Vec<usize> = causes.map_or_else(|| (1..=k_max).collect(), <[usize]>::to_vec);
    for &k in &causes {
        FunctionalKind::Cif { cause: k }.validate(k_max)?;
    }
    let queries = Query::decomposition_set(x0, x1);
    let functionals: Vec<FunctionalKind> =
        causes.iter().map(|&cause| FunctionalKind::Cif { cause }).chain(std::iter::once(FunctionalKind::AllCauseSurvival)).collect();
    let mut curves = Vec::with_capacity(functionals.len());
    let mut dr_diagnostics = Vec::new();
    match estimator {
        EstimatorKind::Plugin => {
            let nuisances = Nuisances::fit(cohort, Target::Competing, false, &config.nuisance)?;
            for &f in &functionals {
                curves.push(plugin_po_set(&nuisances, cohort, &queries, f, grid)?.0);
            }
        }
        EstimatorKind::DoublyRobust => {
            for &f in &functionals {
                let est = crossfit_dr(cohort, &queries, f, grid, config)?;
                curves.push(est.po);
                dr_diagnostics.push(est.diagnostics);
            }
        }
        EstimatorKind::Oracle => return Err(Error::InvalidParameter("oracle curves come from a spec, not a cohort".into())),
    }
    let mut series = curves.iter().map(|po| decompose_difference(po, x0, x1)).collect::<Result<Vec<_>>>()?;
    let all_cause = series.pop().expect("all-cause series present");
    Ok(CrDecomposition { causes, per_cause: series, all_cause, curves, dr_diagnostics })
}
