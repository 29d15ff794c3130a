//! Cross-fitted one-step estimation.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::decompose::{EstimatorKind, PoSet};
use crate::error::{Error, Result};
use crate::identify::{check_grid, plugin_po};
use crate::nuisance::{outcome_target, NuisanceConfig, NuisanceReport, Nuisances};
use crate::query::{FunctionalKind, Query};

use super::influence::{IfContext, IfKind, IfSettings, NuTable};

const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrConfig {
    pub n_folds: usize,
    pub nuisance: NuisanceConfig,
    /// Seed of the fold split.
    pub seed: u64,
    pub floor: f64,
    pub cap: f64,
}

impl Default for DrConfig {
    fn default() -> Self {
        let s = IfSettings::default();
        DrConfig { n_folds: 2, nuisance: NuisanceConfig::default(), seed: 0, floor: s.floor, cap: s.cap }
    }
}

impl DrConfig {
    fn settings(&self) -> IfSettings {
        IfSettings { floor: self.floor, cap: self.cap }
    }
}

/// The cohort the influence function is evaluated on, with the indicator
/// recoded for the functional.
pub fn analysis_view(cohort: &Cohort, functional: FunctionalKind) -> Result<(Cohort, IfKind, FunctionalKind)> {
    functional.validate(cohort.n_causes())?;
    match functional {
        FunctionalKind::Survival if cohort.n_causes() == 1 => Ok((cohort.clone(), IfKind::Survival, functional)),
        FunctionalKind::Survival => {
            let d = cohort.deltas().iter().map(|&d| u8::from(d == 1)).collect();
            Ok((cohort.with_deltas(d, 1)?, IfKind::Survival, functional))
        }
        FunctionalKind::AllCauseSurvival => {
            let d = cohort.deltas().iter().map(|&d| u8::from(d >= 1)).collect();
            Ok((cohort.with_deltas(d, 1)?, IfKind::Survival, FunctionalKind::Survival))
        }
        FunctionalKind::Cif { cause } => Ok((cohort.clone(), IfKind::Cif { cause }, functional)),
        FunctionalKind::Rmst { .. } | FunctionalKind::CumulativeHazard => Err(Error::InvalidParameter(format!(
            "no doubly-robust estimator for {}; use the plug-in",
            functional.label()
        ))),
    }
}

/// Fold label per row: rows are split by `(X, delta > 0)`, shuffled within each
/// stratum and dealt round-robin.
pub fn stratified_folds(cohort: &Cohort, n_folds: usize, seed: u64) -> Result<Vec<usize>> {
    if n_folds < 2 {
        return Err(Error::InvalidParameter(format!("n_folds = {n_folds}; need at least 2")));
    }
    let mut strata: BTreeMap<(u8, bool), Vec<usize>> = BTreeMap::new();
    for (i, r) in cohort.rows().enumerate() {
        strata.entry((r.x, r.delta > 0)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; cohort.len()];
    let mut next = 0;
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[i] = next % n_folds;
            next += 1;
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldDiagnostics {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Plug-in `psi` on the training rows, per query.
    pub plugin: Vec<Vec<f64>>,
    pub nuisance: NuisanceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrDiagnostics {
    pub n_folds: usize,
    /// Rows with at least one influence value scaled down to the cap.
    pub capped_rows: usize,
    /// Rows with a non-finite influence value, zeroed.
    pub nonfinite_rows: usize,
    pub folds: Vec<FoldDiagnostics>,
}

/// Cross-fitted curves for several queries with their joint covariance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrEstimate {
    pub po: PoSet<f64>,
    pub diagnostics: DrDiagnostics,
}

/// One doubly-robust curve with its normal-approximation band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DRCurveEstimate {
    pub query: Query,
    pub functional: FunctionalKind,
    pub grid: Vec<f64>,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DRCurveEstimate {
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "t,estimate,se,lo,hi")?;
        for j in 0..self.grid.len() {
            writeln!(out, "{},{},{},{},{}", self.grid[j], self.estimate[j], self.se[j], self.lo[j], self.hi[j])?;
        }
        Ok(())
    }
}

impl DrEstimate {
    pub fn curve(&self, query: Query) -> Result<DRCurveEstimate> {
        let estimate = self.po.get(query).ok_or_else(|| Error::MissingQuery(query.to_string()))?.to_vec();
        let se = self.po.se(query).ok_or_else(|| Error::Estimation("covariance missing".into()))?;
        let lo = estimate.iter().zip(&se).map(|(v, s)| v - Z95 * s).collect();
        let hi = estimate.iter().zip(&se).map(|(v, s)| v + Z95 * s).collect();
        Ok(DRCurveEstimate { query, functional: self.po.functional, grid: self.po.grid.clone(), estimate, se, lo, hi })
    }
}

/// Running sums from which the estimates and covariances follow;
/// `b = IF + w3 * psi_fold`.
#[derive(Debug, Clone)]
struct Accum {
    q: usize,
    g: usize,
    b: Vec<f64>,
    bb: Vec<f64>,
    bw: Vec<f64>,
    ww: Vec<f64>,
    w: Vec<f64>,
    n: usize,
    capped: usize,
    nonfinite: usize,
}

impl Accum {
    fn new(q: usize, g: usize) -> Self {
        Accum { q, g, b: vec![0.0; q * g], bb: vec![0.0; g * q * q], bw: vec![0.0; g * q * q], ww: vec![0.0; q * q], w: vec![0.0; q], n: 0, capped: 0, nonfinite: 0 }
    }

    /// `b[a * g + j]`, `w3[a]`.
    fn add(&mut self, b: &[f64], w3: &[f64]) {
        let (q, g) = (self.q, self.g);
        for a in 0..q {
            self.w[a] += w3[a];
            for c in 0..q {
                self.ww[a * q + c] += w3[a] * w3[c];
            }
        }
        for j in 0..g {
            for a in 0..q {
                let ba = b[a * g + j];
                self.b[a * g + j] += ba;
                let row = j * q * q + a * q;
                for c in 0..q {
                    self.bb[row + c] += ba * b[c * g + j];
                    self.bw[row + c] += ba * w3[c];
                }
            }
        }
        self.n += 1;
    }

    fn merge(&mut self, o: &Accum) {
        for (a, b) in self.b.iter_mut().zip(&o.b) {
            *a += b;
        }
        for (a, b) in self.bb.iter_mut().zip(&o.bb) {
            *a += b;
        }
        for (a, b) in self.bw.iter_mut().zip(&o.bw) {
            *a += b;
        }
        for (a, b) in self.ww.iter_mut().zip(&o.ww) {
            *a += b;
        }
        for (a, b) in self.w.iter_mut().zip(&o.w) {
            *a += b;
        }
        self.n += o.n;
        self.capped += o.capped;
        self.nonfinite += o.nonfinite;
    }
}

/// Cross-fitted doubly-robust curves on `grid` with folds from [`stratified_folds`].
pub fn crossfit_dr(cohort: &Cohort, queries: &[Query], functional: FunctionalKind, grid: &[f64], config: &DrConfig) -> Result<DrEstimate> {
    let folds = stratified_folds(cohort, config.n_folds, config.seed)?;
    crossfit_dr_with_folds(cohort, queries, functional, grid, &folds, config)
}

/// As [`crossfit_dr`] with a given fold label per row.
pub fn crossfit_dr_with_folds(cohort: &Cohort, queries: &[Query], functional: FunctionalKind, grid: &[f64], folds: &[usize], config: &DrConfig) -> Result<DrEstimate> {
    check_grid(grid)?;
    if queries.is_empty() {
        return Err(Error::InvalidParameter("no queries".into()));
    }
    if folds.len() != cohort.len() {
        return Err(Error::LengthMismatch(format!("{} fold labels for {} rows", folds.len(), cohort.len())));
    }
    cohort.require_both_groups()?;
    let n_folds = folds.iter().copied().max().map_or(0, |m| m + 1);
    if n_folds < 2 {
        return Err(Error::InvalidParameter("need at least two folds".into()));
    }
    let (view, kind, fit_functional) = analysis_view(cohort, functional)?;
    let mut members = vec![Vec::new(); n_folds];
    for (i, &f) in folds.iter().enumerate() {
        members[f].push(i);
    }
    for (f, rows) in members.iter().enumerate() {
        for g in 0..2u8 {
            let in_test = rows.iter().filter(|&&i| view.row(i).x == g).count();
            let total = view.count_group(g);
            if in_test == 0 || in_test == total {
                return Err(Error::Stratification(format!("fold {f} leaves group {g} absent from its test or training rows")));
            }
        }
    }

    let per_fold = (0..n_folds)
        .into_par_iter()
        .map(|f| fit_fold(&view, queries, kind, fit_functional, grid, folds, f, &members[f], config))
        .collect::<Result<Vec<_>>>()?;

    let (q, g) = (queries.len(), grid.len());
    let mut total = Accum::new(q, g);
    let mut fold_diags = Vec::with_capacity(n_folds);
    for (acc, diag) in per_fold {
        total.merge(&acc);
        fold_diags.push(diag);
    }
    let n = total.n as f64;
    let psi: Vec<f64> = total.b.iter().map(|v| v / n).collect();
    let mut covariance = vec![vec![0.0; q * q]; g];
    for (j, cov) in covariance.iter_mut().enumerate() {
        for a in 0..q {
            for c in 0..q {
                let (pa, pc) = (psi[a * g + j], psi[c * g + j]);
                let row = j * q * q;
                let sum_pp = total.bb[row + a * q + c] - pc * total.bw[row + a * q + c] - pa * total.bw[row + c * q + a] + pa * pc * total.ww[a * q + c];
                let sum_a = total.b[a * g + j] - pa * total.w[a];
                let sum_c = total.b[c * g + j] - pc * total.w[c];
                cov[a * q + c] = (sum_pp - sum_a * sum_c / n) / (n - 1.0) / n;
            }
        }
    }
    let mut po = PoSet::new(grid.to_vec(), functional, EstimatorKind::DoublyRobust);
    for (a, &query) in queries.iter().enumerate() {
        po.insert(query, psi[a * g..(a + 1) * g].to_vec())?;
    }
    po.set_covariance(covariance)?;
    let diagnostics = DrDiagnostics { n_folds, capped_rows: total.capped, nonfinite_rows: total.nonfinite, folds: fold_diags };
    Ok(DrEstimate { po, diagnostics })
}

#[allow(clippy::too_many_arguments)]
fn fit_fold(
    view: &Cohort,
    queries: &[Query],
    kind: IfKind,
    functional: FunctionalKind,
    grid: &[f64],
    folds: &[usize],
    fold: usize,
    test: &[usize],
    config: &DrConfig,
) -> Result<(Accum, FoldDiagnostics)> {
    let train_idx: Vec<usize> = (0..view.len()).filter(|&i| folds[i] != fold).collect();
    let train = view.subset(&train_idx);
    let mut ncfg = config.nuisance;
    ncfg.seed = ncfg.seed.wrapping_add(1000 * fold as u64);
    let nuisances = Nuisances::fit(&train, outcome_target(functional, train.n_causes()), true, &ncfg)?;
    let all_train: Vec<usize> = (0..train.len()).collect();
    let mut psi = Vec::with_capacity(queries.len());
    let mut nus = Vec::with_capacity(queries.len());
    for &query in queries {
        psi.push(plugin_po(&nuisances, &train, query, functional, grid)?.values);
        nus.push(NuTable::from_rows(&nuisances, &train, &all_train, query, functional, grid)?);
    }
    let settings = config.settings();
    let contexts: Vec<IfContext<'_>> = queries
        .iter()
        .enumerate()
        .map(|(a, &query)| IfContext { provider: &nuisances, nu: &nus[a], query, functional, kind, grid, psi: &psi[a], settings })
        .collect();

    let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
    for &i in test {
        let r = view.row(i);
        let key = std::iter::once(f64::from(r.x)).chain(r.z.iter().copied()).chain(r.w.iter().copied()).map(f64::to_bits).collect();
        groups.entry(key).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = groups.into_values().collect();
    let (q, g) = (queries.len(), grid.len());
    let parts = groups
        .par_iter()
        .map(|rows| -> Result<Accum> {
            let first = view.row(rows[0]);
            let handles = contexts.iter().map(|c| c.group(first.x, first.z, first.w)).collect::<Result<Vec<_>>>()?;
            let mut acc = Accum::new(q, g);
            let mut b = vec![0.0; q * g];
            let mut w3 = vec![0.0; q];
            for &i in rows {
                let r = view.row(i);
                let (mut capped, mut nonfinite) = (false, false);
                for (a, (ctx, h)) in contexts.iter().zip(&handles).enumerate() {
                    let out = &mut b[a * g..(a + 1) * g];
                    let (flags, w) = ctx.row_totals(h, r.m, r.delta, out);
                    for (o, p) in out.iter_mut().zip(ctx.psi) {
                        *o += w * p;
                    }
                    w3[a] = w;
                    capped |= flags.capped;
                    nonfinite |= flags.nonfinite;
                }
                acc.add(&b, &w3);
                acc.capped += usize::from(capped);
                acc.nonfinite += usize::from(nonfinite);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc = Accum::new(q, g);
    for p in &parts {
        acc.merge(p);
    }
    let diag = FoldDiagnostics { fold, n_train: train.len(), n_test: test.len(), plugin: psi, nuisance: nuisances.report() };
    Ok((acc, diag))
}
