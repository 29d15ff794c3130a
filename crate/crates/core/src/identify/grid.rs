use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::stats::quantile;

/// Distinct observed event times up to the `q`-quantile of the observed times,
/// merged with `extra`; sorted and deduplicated.
pub fn default_grid(cohort: &Cohort, q: f64, extra: &[f64]) -> Result<Vec<f64>> {
    if cohort.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let cut = quantile(cohort.times(), q);
    let mut grid: Vec<f64> = cohort
        .rows()
        .filter(|r| r.delta >= 1 && r.m <= cut)
        .map(|r| r.m)
        .chain(extra.iter().copied())
        .collect();
    if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidParameter("grid times must be finite and nonnegative".into()));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.is_empty() {
        return Err(Error::InvalidParameter("no event times available for the default grid".into()));
    }
    Ok(grid)
}

/// `k` evenly spaced quantiles of the observed event times (falling back to all times).
pub fn quantile_grid(cohort: &Cohort, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidParameter("quantile grid needs at least one point".into()));
    }
    let mut events: Vec<f64> = cohort.rows().filter(|r| r.delta >= 1).map(|r| r.m).collect();
    if events.is_empty() {
        events = cohort.times().to_vec();
    }
    if events.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let mut grid: Vec<f64> = (1..=k).map(|i| quantile(&events, i as f64 / (k + 1) as f64)).collect();
    grid.dedup();
    Ok(grid)
}

/// Checks that `grid` is nonempty, finite, nonnegative and strictly increasing.
pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("grid is empty".into()));
    }
    if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidParameter("grid times must be finite and nonnegative".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
    }
    Ok(())
}
