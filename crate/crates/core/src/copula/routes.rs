//! Potential-outcome survival under dependent censoring.
//!
//! Route I applies the copula within each covariate stratum and aggregates the
//! recovered conditional survival curves with the plug-in weights. Route II
//! applies it once to doubly-robust potential-outcome incidences of the event
//! and of censoring, with an envelope over the incidence bands.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::decompose::{decompose_difference, DecompositionSeries, Effect, EstimatorKind, PoSet};
use crate::dr::{crossfit_dr, DrConfig, DrEstimate};
use crate::error::{Error, Result};
use crate::identify::{check_grid, weighted_plugin};
use crate::nuisance::Nuisances;
use crate::query::{FunctionalKind, Query};
use crate::stats::isotonic_increasing;
use crate::survival::{RiskTable, StepCurve};

use super::archimedean::CopulaSpec;
use super::cge::cge_bounded_values;

const Z95: f64 = 1.959963984540054;

/// Indicators recoded as two competing causes: 1 = event, 2 = censoring.
fn competing_view(cohort: &Cohort) -> Result<Cohort> {
    if cohort.n_causes() != 1 {
        return Err(Error::InvalidParameter(format!("dependent-censoring routes need a single event type, cohort has {}", cohort.n_causes())));
    }
    let d = cohort.deltas().iter().map(|&d| if d == 1 { 1 } else { 2 }).collect();
    cohort.with_deltas(d, 2)
}

/// Midpoint survival recovered by the bounded recursion from one set of rows.
fn stratum_survival(times: &[f64], deltas: &[u8], copula: &CopulaSpec<f64>) -> Result<(StepCurve<f64>, usize, f64)> {
    let table = RiskTable::new(times, deltas, 2)?;
    let (ft, fc) = (table.cif(1)?, table.cif(2)?);
    let grid = table.times.clone();
    let vt: Vec<f64> = grid.iter().map(|&t| ft.at(t)).collect();
    let vc: Vec<f64> = grid.iter().map(|&t| fc.at(t)).collect();
    let st = cge_bounded_values(&grid, &vt, &vc, copula)?;
    Ok((st.survival()?, st.clamped, st.max_width()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Route1Estimate {
    pub po: PoSet<f64>,
    /// Generator-inverse clamps summed over strata.
    pub clamped: usize,
    /// Strata whose rows came from a coarser level.
    pub fallbacks: usize,
    /// Largest bound width over strata.
    pub max_width: f64,
}

/// Route I: conditional copula within each `(x, z, w)` stratum, aggregated by
/// the plug-in weights of `nuisances`. Empty strata back off to `(x, z)`, then `x`.
pub fn route1_conditional(cohort: &Cohort, copula: &CopulaSpec<f64>, nuisances: &Nuisances, queries: &[Query], grid: &[f64]) -> Result<Route1Estimate> {
    check_grid(grid)?;
    let view = competing_view(cohort)?;
    view.require_both_groups()?;
    type Key = Vec<u64>;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Key>();
    let mut full: BTreeMap<(u8, Key), Vec<usize>> = BTreeMap::new();
    let mut by_z: BTreeMap<(u8, Key), Vec<usize>> = BTreeMap::new();
    let mut by_x: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, r) in view.rows().enumerate() {
        let zw: Key = r.z.iter().chain(r.w).map(|x| x.to_bits()).collect();
        full.entry((r.x, zw)).or_default().push(i);
        by_z.entry((r.x, bits(r.z))).or_default().push(i);
        by_x.entry(r.x).or_default().push(i);
    }
    // every (x_y, z, w) the plug-in will ask for
    let mut needed: BTreeMap<(u8, Key), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in view.rows() {
        for q in queries {
            let zw: Key = r.z.iter().chain(r.w).map(|x| x.to_bits()).collect();
            needed.entry((q.x_y, zw)).or_insert_with(|| (r.z.to_vec(), r.w.to_vec()));
        }
    }
    let entries: Vec<_> = needed.into_iter().collect();
    let fitted = entries
        .par_iter()
        .map(|((x, zw), (z, _))| {
            let (rows, fallback) = match full.get(&(*x, zw.clone())) {
                Some(r) => (r, false),
                None => match by_z.get(&(*x, bits(z))) {
                    Some(r) => (r, true),
                    None => (&by_x[x], true),
                },
            };
            let times: Vec<f64> = rows.iter().map(|&i| view.times()[i]).collect();
            let deltas: Vec<u8> = rows.iter().map(|&i| view.deltas()[i]).collect();
            let (s, clamped, width) = stratum_survival(&times, &deltas, copula)?;
            Ok(((*x, zw.clone()), (grid.iter().map(|&t| s.at(t)).collect::<Vec<f64>>(), clamped, width, fallback)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut clamped = 0;
    let mut fallbacks = 0;
    let mut max_width = 0.0f64;
    for (_, (_, c, w, f)) in &fitted {
        clamped += c;
        fallbacks += usize::from(*f);
        max_width = max_width.max(*w);
    }
    let table: BTreeMap<(u8, Key), Vec<f64>> = fitted.into_iter().map(|(k, (v, ..))| (k, v)).collect();
    let mut po = PoSet::new(grid.to_vec(), FunctionalKind::Survival, EstimatorKind::Plugin);
    for &q in queries {
        let est = weighted_plugin(cohort, &nuisances.p_zw, &nuisances.p_z, &nuisances.p_marginal, q, FunctionalKind::Survival, grid, |x, z, w| {
            let zw: Key = z.iter().chain(w).map(|v| v.to_bits()).collect();
            table.get(&(x, zw)).cloned().ok_or_else(|| Error::Estimation("stratum curve missing".into()))
        })?;
        po.insert(q, est.values)?;
    }
    Ok(Route1Estimate { po, clamped, fallbacks, max_width })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvelopeConfig {
    /// Accepted sampled trajectories per query.
    pub n_samples: usize,
    pub seed: u64,
    /// Proposals per requested sample before giving up.
    pub max_attempts_per_sample: usize,
    /// Size of the internal time grid the recursion runs on.
    pub fine_points: usize,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig { n_samples: 200, seed: 0, max_attempts_per_sample: 50, fine_points: 200 }
    }
}

/// Doubly-robust potential-outcome incidences of the event and of censoring on
/// an internal grid that contains the reporting grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CifBands {
    pub queries: Vec<Query>,
    pub fine_grid: Vec<f64>,
    /// Positions of the reporting grid inside `fine_grid`.
    pub report_index: Vec<usize>,
    pub event: DrEstimate,
    pub censoring: DrEstimate,
}

/// Observed times up to the last reporting time, thinned to at most `points`, merged with `grid`.
fn fine_grid(cohort: &Cohort, grid: &[f64], points: usize) -> Vec<f64> {
    let last = *grid.last().expect("nonempty grid");
    let mut times: Vec<f64> = cohort.times().iter().copied().filter(|&t| t <= last).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    if points > 0 && times.len() > points {
        let n = times.len();
        times = (1..=points).map(|i| times[(i * n / points).min(n) - 1]).collect();
        times.dedup();
    }
    times.extend_from_slice(grid);
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

/// Cross-fitted incidences of the event and of censoring for `queries`.
pub fn route2_cif_bands(cohort: &Cohort, queries: &[Query], grid: &[f64], dr: &DrConfig, fine_points: usize) -> Result<CifBands> {
    check_grid(grid)?;
    let view = competing_view(cohort)?;
    let fine = fine_grid(&view, grid, fine_points);
    let report_index = grid.iter().map(|t| fine.binary_search_by(|u| u.total_cmp(t)).expect("grid merged")).collect();
    let event = crossfit_dr(&view, queries, FunctionalKind::Cif { cause: 1 }, &fine, dr)?;
    let censoring = crossfit_dr(&view, queries, FunctionalKind::Cif { cause: 2 }, &fine, dr)?;
    Ok(CifBands { queries: queries.to_vec(), fine_grid: fine, report_index, event, censoring })
}

/// Monotone, `[0, 1]`-valued version of an estimated incidence.
fn monotone_cif(v: &[f64]) -> Vec<f64> {
    let ones = vec![1.0; v.len()];
    isotonic_increasing(v, &ones).into_iter().map(|x| x.clamp(0.0, 1.0)).collect()
}

/// One potential-outcome survival curve with its sensitivity envelope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Route2Curve {
    pub query: Query,
    pub central: Vec<f64>,
    pub env_lo: Vec<f64>,
    pub env_hi: Vec<f64>,
    /// Envelope members on the reporting grid: central, four corners, then samples.
    #[serde(skip)]
    pub members: Vec<Vec<f64>>,
    pub accepted_samples: usize,
    pub infeasible_corners: usize,
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Route2Estimate {
    pub copula: CopulaSpec<f64>,
    pub grid: Vec<f64>,
    pub curves: Vec<Route2Curve>,
}

/// Route II: the bounded recursion on the central incidences gives the central
/// survival curve; the envelope is the pointwise range over the four band
/// corners and sampled monotone trajectories inside the bands that keep the
/// two incidences summing to at most one.
pub fn route2_population(bands: &CifBands, copula: &CopulaSpec<f64>, env: &EnvelopeConfig) -> Result<Route2Estimate> {
    let fine = &bands.fine_grid;
    let curves = bands
        .queries
        .par_iter()
        .enumerate()
        .map(|(qi, &query)| {
            let band = |est: &DrEstimate| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
                let c = est.curve(query)?;
                let central = monotone_cif(&c.estimate);
                let lo: Vec<f64> = monotone_cif(&c.estimate.iter().zip(&c.se).map(|(e, s)| e - Z95 * s).collect::<Vec<_>>());
                let hi: Vec<f64> = monotone_cif(&c.estimate.iter().zip(&c.se).map(|(e, s)| e + Z95 * s).collect::<Vec<_>>());
                let lo = lo.iter().zip(&central).map(|(l, c)| l.min(*c)).collect();
                let hi = hi.iter().zip(&central).map(|(h, c)| h.max(*c)).collect();
                Ok((central, lo, hi))
            };
            let (mut ct, lt, ht) = band(&bands.event)?;
            let (mut cc, lc, hc) = band(&bands.censoring)?;
            if let Some(j) = (0..fine.len()).find(|&j| lt[j] + lc[j] > 1.0 + 1e-12) {
                return Err(Error::InfeasibleBands(format!("lower incidence bands sum above one at t = {} for {query}", fine[j])));
            }
            for j in 0..fine.len() {
                let s = ct[j] + cc[j];
                if s > 1.0 {
                    ct[j] /= s;
                    cc[j] /= s;
                }
            }
            let mut clamped = 0;
            let mut run = |ft: &[f64], fc: &[f64]| -> Result<Vec<f64>> {
                let st = cge_bounded_values(fine, ft, fc, copula)?;
                clamped += st.clamped;
                Ok(bands.report_index.iter().map(|&j| st.s_hat[j]).collect())
            };
            let central = run(&ct, &cc)?;
            let mut members = vec![central.clone()];
            let mut infeasible_corners = 0;
            for (ft, fc) in [(&lt, &lc), (&lt, &hc), (&ht, &lc), (&ht, &hc)] {
                if ft.iter().zip(fc.iter()).any(|(a, b)| a + b > 1.0 + 1e-12) {
                    infeasible_corners += 1;
                    members.push(central.clone());
                } else {
                    members.push(run(ft, fc)?);
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(env.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(qi as u64 + 1)));
            let mut accepted = 0;
            let draw = |lo: &[f64], hi: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
                let mut v: Vec<f64> = lo.iter().zip(hi).map(|(&l, &h)| if h > l { rng.gen_range(l..=h) } else { l }).collect();
                v.sort_by(f64::total_cmp);
                v
            };
            for _ in 0..env.n_samples.saturating_mul(env.max_attempts_per_sample) {
                if accepted == env.n_samples {
                    break;
                }
                let ft = draw(&lt, &ht, &mut rng);
                let fc = draw(&lc, &hc, &mut rng);
                if ft.iter().zip(&fc).any(|(a, b)| a + b > 1.0 + 1e-12) {
                    continue;
                }
                members.push(run(&ft, &fc)?);
                accepted += 1;
            }
            let env_lo = (0..central.len()).map(|j| members.iter().map(|m| m[j]).fold(f64::INFINITY, f64::min)).collect();
            let env_hi = (0..central.len()).map(|j| members.iter().map(|m| m[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
            Ok(Route2Curve { query, central, env_lo, env_hi, members, accepted_samples: accepted, infeasible_corners, clamped })
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = bands.report_index.iter().map(|&j| fine[j]).collect();
    Ok(Route2Estimate { copula: *copula, grid, curves })
}

/// Pointwise range of one effect over aligned envelope members.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectEnvelope {
    pub effect: Effect,
    pub name: String,
    pub central: Vec<f64>,
    pub env_lo: Vec<f64>,
    pub env_hi: Vec<f64>,
}

impl Route2Estimate {
    pub fn curve(&self, query: Query) -> Result<&Route2Curve> {
        self.curves.iter().find(|c| c.query == query).ok_or_else(|| Error::MissingQuery(query.to_string()))
    }

    /// Central curves as a potential-outcome set (no covariance).
    pub fn central_po(&self) -> Result<PoSet<f64>> {
        let mut po = PoSet::new(self.grid.clone(), FunctionalKind::Survival, EstimatorKind::DoublyRobust);
        for c in &self.curves {
            po.insert(c.query, c.central.clone())?;
        }
        Ok(po)
    }

    /// Difference-scale decomposition of the central curves, with each effect's
    /// range over the members shared by all four curves.
    pub fn decompose(&self, x0: u8, x1: u8) -> Result<(DecompositionSeries<f64>, Vec<EffectEnvelope>)> {
        let series = decompose_difference(&self.central_po()?, x0, x1)?;
        let qs = Query::decomposition_set(x0, x1);
        let curves = qs.iter().map(|&q| self.curve(q)).collect::<Result<Vec<_>>>()?;
        let n_members = curves.iter().map(|c| c.members.len()).min().unwrap_or(0);
        let mut envelopes = Vec::with_capacity(4);
        for s in &series.effects {
            let mut lo = s.estimate.clone();
            let mut hi = s.estimate.clone();
            for m in 0..n_members {
                let po = PoSet {
                    grid: self.grid.clone(),
                    functional: FunctionalKind::Survival,
                    estimator: EstimatorKind::DoublyRobust,
                    queries: qs.to_vec(),
                    estimates: curves.iter().map(|c| c.members[m].clone()).collect(),
                    covariance: None,
                };
                let d = decompose_difference(&po, x0, x1)?;
                for (j, v) in d.effect(s.effect).estimate.iter().enumerate() {
                    lo[j] = lo[j].min(*v);
                    hi[j] = hi[j].max(*v);
                }
            }
            envelopes.push(EffectEnvelope { effect: s.effect, name: s.name.clone(), central: s.estimate.clone(), env_lo: lo, env_hi: hi });
        }
        Ok((series, envelopes))
    }

    /// `t,central,env_lo,env_hi,tau,curve` rows for every curve, then every effect.
    pub fn write_envelope_csv<W: Write>(&self, mut out: W, comments: &[String], effects: &[EffectEnvelope]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "t,central,env_lo,env_hi,tau,curve")?;
        let tau = self.copula.kendall_tau();
        for c in &self.curves {
            for (j, t) in self.grid.iter().enumerate() {
                writeln!(out, "{t},{},{},{},{tau},{}", c.central[j], c.env_lo[j], c.env_hi[j], c.query.label())?;
            }
        }
        for e in effects {
            for (j, t) in self.grid.iter().enumerate() {
                writeln!(out, "{t},{},{},{},{tau},{}", e.central[j], e.env_lo[j], e.env_hi[j], e.name)?;
            }
        }
        Ok(())
    }
}
