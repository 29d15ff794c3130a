//! Influence functions of pathway-specific potential outcomes.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::cohort::{Cohort, Row};
use crate::error::{Error, Result};
use crate::identify::functional_value;
use crate::nuisance::{Conditioning, Nuisances, Predicted};
use crate::query::{FunctionalKind, Query};

/// Nuisance functions the influence function is evaluated at.
pub trait IfNuisances: Sync {
    /// Outcome curves at `(x, z, w)`.
    fn outcome(&self, x: u8, z: &[f64], w: &[f64]) -> Result<Arc<Predicted>>;
    /// Censoring survival at `(x, z, w)`; `None` means no censoring (`G = 1`).
    fn censoring(&self, x: u8, z: &[f64], w: &[f64]) -> Result<Option<Arc<Predicted>>>;
    /// Clipped `P(X = x | V)`.
    fn propensity(&self, conditioning: Conditioning, x: u8, z: &[f64], w: &[f64]) -> Result<f64>;
}

impl IfNuisances for Nuisances {
    fn outcome(&self, x: u8, z: &[f64], w: &[f64]) -> Result<Arc<Predicted>> {
        self.outcome.predict(x, z, w)
    }

    fn censoring(&self, x: u8, z: &[f64], w: &[f64]) -> Result<Option<Arc<Predicted>>> {
        self.censoring.as_ref().map(|c| c.predict(x, z, w)).transpose()
    }

    fn propensity(&self, conditioning: Conditioning, x: u8, z: &[f64], w: &[f64]) -> Result<f64> {
        match conditioning {
            Conditioning::Marginal => self.p_marginal.predict(x, z, w),
            Conditioning::Z => self.p_z.predict(x, z, w),
            Conditioning::ZW => self.p_zw.predict(x, z, w),
        }
    }
}

/// Which influence function to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IfKind {
    /// Augmented IPCW survival; `delta >= 1` is the event.
    Survival,
    /// IPCW cumulative incidence of one cause.
    Cif { cause: usize },
}

/// Floors and caps applied inside the influence function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IfSettings {
    /// Lower bound on `S` and `G` in denominators.
    pub floor: f64,
    /// Largest admissible `|IF|` for rows where a floor was active; larger
    /// values on those rows are scaled down and flagged.
    pub cap: f64,
}

impl Default for IfSettings {
    fn default() -> Self {
        IfSettings { floor: 0.01, cap: 50.0 }
    }
}

/// Additive pieces of one influence value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct IfComponents {
    /// `w1 * (IPCW core - mu)`.
    pub ipcw: f64,
    /// `w1 * xi_1`.
    pub xi1: f64,
    /// `-w1 * xi_2`.
    pub xi2: f64,
    /// `w2 * (mu - nu)`.
    pub mediator: f64,
    /// `w3 * (nu - psi)`.
    pub conditioning: f64,
}

impl IfComponents {
    pub fn total(&self) -> f64 {
        self.ipcw + self.xi1 + self.xi2 + self.mediator + self.conditioning
    }

    fn scale(&mut self, s: f64) {
        self.ipcw *= s;
        self.xi1 *= s;
        self.xi2 *= s;
        self.mediator *= s;
        self.conditioning *= s;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RowFlags {
    pub capped: bool,
    pub nonfinite: bool,
}

/// `nu(z) = E[mu(x_y, z, W) | X = x_w, Z = z]` on a grid, keyed by `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct NuTable {
    cells: BTreeMap<Vec<u64>, Vec<f64>>,
    fallback: Vec<f64>,
}

fn zkey(z: &[f64]) -> Vec<u64> {
    z.iter().map(|v| v.to_bits()).collect()
}

impl NuTable {
    /// Cell means over `rows` of `cohort` with `X = x_w`, grouped by `Z`; unseen
    /// `z` use the mean over all `X = x_w` rows.
    pub fn from_rows(provider: &dyn IfNuisances, cohort: &Cohort, rows: &[usize], query: Query, functional: FunctionalKind, grid: &[f64]) -> Result<Self> {
        let mut sums: BTreeMap<Vec<u64>, (Vec<f64>, usize)> = BTreeMap::new();
        let mut cache: BTreeMap<Vec<u64>, Vec<f64>> = BTreeMap::new();
        for &i in rows {
            let r = cohort.row(i);
            if r.x != query.x_w {
                continue;
            }
            let key: Vec<u64> = r.z.iter().chain(r.w).map(|v| v.to_bits()).collect();
            if !cache.contains_key(&key) {
                let p = provider.outcome(query.x_y, r.z, r.w)?;
                cache.insert(key.clone(), grid.iter().map(|&t| functional_value(&p, functional, t)).collect());
            }
            let mu = &cache[&key];
            let e = sums.entry(zkey(r.z)).or_insert_with(|| (vec![0.0; grid.len()], 0));
            for (s, m) in e.0.iter_mut().zip(mu) {
                *s += m;
            }
            e.1 += 1;
        }
        if sums.is_empty() {
            return Err(Error::DegenerateGroup(format!("no training rows with x = {}", query.x_w)));
        }
        let total: usize = sums.values().map(|v| v.1).sum();
        let mut fallback = vec![0.0; grid.len()];
        for (s, _) in sums.values() {
            for (f, v) in fallback.iter_mut().zip(s) {
                *f += v;
            }
        }
        fallback.iter_mut().for_each(|f| *f /= total as f64);
        let cells = sums.into_iter().map(|(k, (s, c))| (k, s.into_iter().map(|v| v / c as f64).collect())).collect();
        Ok(NuTable { cells, fallback })
    }

    /// Table with given values per `z`.
    pub fn from_values(values: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        let fallback = values.first().map(|v| v.1.clone()).ok_or_else(|| Error::InvalidParameter("empty nu table".into()))?;
        Ok(NuTable { cells: values.into_iter().map(|(z, v)| (zkey(&z), v)).collect(), fallback })
    }

    pub fn get(&self, z: &[f64]) -> &[f64] {
        self.cells.get(&zkey(z)).unwrap_or(&self.fallback)
    }
}

/// Grid-level quantities shared by all rows with the same `(x, z, w)`.
struct GroupTerms {
    w1: f64,
    w2: f64,
    w3: f64,
    mu: Vec<f64>,
    nu: Vec<f64>,
    core: Option<CoreCurves>,
}

struct CoreCurves {
    outcome: Arc<Predicted>,
    censoring: Option<Arc<Predicted>>,
    s_grid: Vec<f64>,
    g_grid: Vec<f64>,
    /// Breakpoints of the censoring survival and the cumulative sums of
    /// `h(u) / (S(u) G(u))`, with `h(u) = 1 - G(u) / G(u-)`.
    q_times: Vec<f64>,
    q_each: Vec<f64>,
    q_cum: Vec<f64>,
    q_grid: Vec<f64>,
}

/// Evaluates the influence function of one query at fixed nuisances, `nu` and `psi`.
pub struct IfContext<'a> {
    pub provider: &'a dyn IfNuisances,
    pub nu: &'a NuTable,
    pub query: Query,
    pub functional: FunctionalKind,
    pub kind: IfKind,
    pub grid: &'a [f64],
    pub psi: &'a [f64],
    pub settings: IfSettings,
}

impl IfContext<'_> {
    fn floor(&self, v: f64) -> f64 {
        v.max(self.settings.floor)
    }

    fn group_terms(&self, x: u8, z: &[f64], w: &[f64]) -> Result<GroupTerms> {
        let q = self.query;
        let p = |c: Conditioning, g: u8| self.provider.propensity(c, g, z, w);
        let p_xz = p(Conditioning::Marginal, q.x_z)?;
        let lambda_z = p(Conditioning::Z, q.x_z)? / p(Conditioning::Z, q.x_w)?;
        let w3 = if x == q.x_z { 1.0 / p_xz } else { 0.0 };
        let w2 = if x == q.x_w { lambda_z / p_xz } else { 0.0 };
        let w1 = if x == q.x_y { lambda_z / p_xz * p(Conditioning::ZW, q.x_w)? / p(Conditioning::ZW, q.x_y)? } else { 0.0 };
        let outcome = self.provider.outcome(q.x_y, z, w)?;
        let mu: Vec<f64> = self.grid.iter().map(|&t| functional_value(&outcome, self.functional, t)).collect();
        let nu = self.nu.get(z).to_vec();
        let core = if w1 != 0.0 {
            let censoring = self.provider.censoring(x, z, w)?;
            let g_at = |t: f64| censoring.as_ref().map_or(1.0, |c| c.survival.at(t));
            let s_grid: Vec<f64> = self.grid.iter().map(|&t| outcome.survival.at(t)).collect();
            let g_grid: Vec<f64> = self.grid.iter().map(|&t| g_at(t)).collect();
            let (mut q_times, mut q_each, mut q_cum) = (Vec::new(), Vec::new(), Vec::new());
            if let (IfKind::Survival, Some(c)) = (self.kind, censoring.as_ref()) {
                let mut prev_g = c.survival.value_at_zero();
                let mut acc = 0.0;
                for (&u, &g) in c.survival.breakpoints().iter().zip(c.survival.values()) {
                    let h = if prev_g > 0.0 { (1.0 - g / prev_g).max(0.0) } else { 0.0 };
                    prev_g = g;
                    if h == 0.0 {
                        continue;
                    }
                    let qv = h / (self.floor(outcome.survival.at(u)) * self.floor(g));
                    acc += qv;
                    q_times.push(u);
                    q_each.push(qv);
                    q_cum.push(acc);
                }
            }
            let q_grid = self.grid.iter().map(|&t| cum_at(&q_times, &q_cum, t)).collect();
            Some(CoreCurves { outcome, censoring, s_grid, g_grid, q_times, q_each, q_cum, q_grid })
        } else {
            None
        };
        Ok(GroupTerms { w1, w2, w3, mu, nu, core })
    }

    fn row_terms_with(&self, g: &GroupTerms, m: f64, delta: u8) -> (Vec<IfComponents>, RowFlags) {
        let mut flags = RowFlags::default();
        let mut out = Vec::with_capacity(self.grid.len());
        // row-level values that depend only on the observed time
        let eps = self.settings.floor;
        let at_m = g.core.as_ref().map(|c| {
            let s_m = c.outcome.survival.at(m);
            let g_m = c.censoring.as_ref().map_or(1.0, |cc| cc.survival.at(m));
            let g_m_left = c.censoring.as_ref().map_or(1.0, |cc| cc.survival.left_limit(m));
            // S and G are non-increasing, so every denominator up to m is floored only if these are
            let floored_by_m = s_m < eps || g_m < eps;
            let floored_at_m = g_m_left < eps;
            let (s_m, g_m, g_m_left) = (self.floor(s_m), self.floor(g_m), self.floor(g_m_left));
            let q_before = {
                let idx = c.q_times.partition_point(|&u| u < m);
                if idx == 0 {
                    0.0
                } else {
                    c.q_cum[idx - 1]
                }
            };
            let q_here = match c.q_times.binary_search_by(|u| u.total_cmp(&m)) {
                Ok(j) => c.q_each[j],
                Err(_) => 0.0,
            };
            (s_m, g_m, g_m_left, q_before, q_here, floored_by_m, floored_at_m)
        });
        for (j, &t) in self.grid.iter().enumerate() {
            let mu = g.mu[j];
            let mut comp = IfComponents {
                mediator: g.w2 * (mu - g.nu[j]),
                conditioning: g.w3 * (g.nu[j] - self.psi[j]),
                ..Default::default()
            };
            let mut floored = false;
            if let (Some(c), Some((s_m, g_m, g_m_left, q_before, q_here, floored_by_m, floored_at_m))) = (&g.core, at_m) {
                match self.kind {
                    IfKind::Survival => {
                        let s_t = c.s_grid[j];
                        let ipcw = if m > t { 1.0 / self.floor(c.g_grid[j]) } else { 0.0 };
                        let censored_by_t = delta == 0 && m <= t;
                        let xi1 = if censored_by_t { s_t / (s_m * g_m) } else { 0.0 };
                        let q = if m > t {
                            c.q_grid[j]
                        } else if censored_by_t {
                            q_before + q_here
                        } else {
                            q_before
                        };
                        floored = if m > t { s_t < eps || c.g_grid[j] < eps } else { floored_by_m };
                        comp.ipcw = g.w1 * (ipcw - mu);
                        comp.xi1 = g.w1 * xi1;
                        comp.xi2 = -g.w1 * s_t * q;
                    }
                    IfKind::Cif { cause } => {
                        let hit = if m <= t && delta as usize == cause { 1.0 / g_m_left } else { 0.0 };
                        floored = hit != 0.0 && floored_at_m;
                        comp.ipcw = g.w1 * (hit - mu);
                    }
                }
            }
            let total = comp.total();
            if !total.is_finite() {
                comp = IfComponents::default();
                flags.nonfinite = true;
            } else if floored && total.abs() > self.settings.cap {
                comp.scale(self.settings.cap / total.abs());
                flags.capped = true;
            }
            out.push(comp);
        }
        (out, flags)
    }

    /// Influence components of one row at every grid time.
    pub fn row_terms(&self, row: Row<'_>) -> Result<(Vec<IfComponents>, RowFlags)> {
        let g = self.group_terms(row.x, row.z, row.w)?;
        Ok(self.row_terms_with(&g, row.m, row.delta))
    }

    /// Influence values for `rows` of `cohort`, grouped internally by covariates.
    pub fn evaluate(&self, cohort: &Cohort, rows: &[usize]) -> Result<InfluenceEvaluation> {
        let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
        for (pos, &i) in rows.iter().enumerate() {
            let r = cohort.row(i);
            let key: Vec<u64> = std::iter::once(f64::from(r.x)).chain(r.z.iter().copied()).chain(r.w.iter().copied()).map(f64::to_bits).collect();
            groups.entry(key).or_default().push(pos);
        }
        let mut components = vec![Vec::new(); rows.len()];
        let mut flags = vec![RowFlags::default(); rows.len()];
        for members in groups.values() {
            let first = cohort.row(rows[members[0]]);
            let g = self.group_terms(first.x, first.z, first.w)?;
            for &pos in members {
                let r = cohort.row(rows[pos]);
                let (c, f) = self.row_terms_with(&g, r.m, r.delta);
                components[pos] = c;
                flags[pos] = f;
            }
        }
        Ok(InfluenceEvaluation { rows: rows.to_vec(), fold: None, components, flags })
    }

    pub(crate) fn group(&self, x: u8, z: &[f64], w: &[f64]) -> Result<GroupHandle> {
        Ok(GroupHandle(self.group_terms(x, z, w)?))
    }

    pub(crate) fn row_totals(&self, g: &GroupHandle, m: f64, delta: u8, out: &mut [f64]) -> (RowFlags, f64) {
        let (c, f) = self.row_terms_with(&g.0, m, delta);
        for (o, ci) in out.iter_mut().zip(&c) {
            *o = ci.total();
        }
        (f, g.0.w3)
    }

    /// Survival influence value of one row at `grid[j]`.
    pub fn influence_survival(&self, row: Row<'_>, j: usize) -> Result<f64> {
        if self.kind != IfKind::Survival {
            return Err(Error::InvalidParameter("context is not a survival influence function".into()));
        }
        Ok(self.row_terms(row)?.0[j].total())
    }

    /// Cumulative-incidence influence value of one row at `grid[j]`.
    pub fn influence_cif(&self, row: Row<'_>, j: usize) -> Result<f64> {
        if !matches!(self.kind, IfKind::Cif { .. }) {
            return Err(Error::InvalidParameter("context is not a cumulative-incidence influence function".into()));
        }
        Ok(self.row_terms(row)?.0[j].total())
    }
}

pub(crate) struct GroupHandle(GroupTerms);

fn cum_at(times: &[f64], cum: &[f64], t: f64) -> f64 {
    let idx = times.partition_point(|&u| u <= t);
    if idx == 0 {
        0.0
    } else {
        cum[idx - 1]
    }
}

/// Per-row influence values with their components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfluenceEvaluation {
    pub rows: Vec<usize>,
    /// Fold whose nuisances were used, when cross-fitted.
    pub fold: Option<usize>,
    /// `components[r][j]` for `rows[r]` at grid time `j`.
    pub components: Vec<Vec<IfComponents>>,
    pub flags: Vec<RowFlags>,
}

impl InfluenceEvaluation {
    pub fn totals(&self, j: usize) -> Vec<f64> {
        self.components.iter().map(|c| c[j].total()).collect()
    }

    pub fn n_capped(&self) -> usize {
        self.flags.iter().filter(|f| f.capped).count()
    }

    pub fn n_nonfinite(&self) -> usize {
        self.flags.iter().filter(|f| f.nonfinite).count()
    }
}
