//! Product-limit estimators over a [`RiskTable`].
//!
//! Ties follow the events-before-censorings convention: a row censored at
//! `t` is still counted in the risk set for events at `t`, and subjects with
//! an event at `t` are removed before censorings at `t` are processed.

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::curve::{CurveKind, StepCurve};

/// Counts per distinct observed time.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskTable<F> {
    pub times: Vec<F>,
    pub n_at_risk: Vec<usize>,
    /// `n_events[j][k - 1]` = events of cause `k` at `times[j]`.
    pub n_events: Vec<Vec<usize>>,
    pub n_censored: Vec<usize>,
    pub n_causes: usize,
}

impl<F: Real> RiskTable<F> {
    /// Builds the table; `deltas` use `0` for censoring and `1..=n_causes` for events.
    pub fn new(times: &[F], deltas: &[u8], n_causes: usize) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::EmptyCohort);
        }
        if times.len() != deltas.len() {
            return Err(Error::LengthMismatch(format!("{} times vs {} indicators", times.len(), deltas.len())));
        }
        let n_causes = n_causes.max(1);
        for (&t, &d) in times.iter().zip(deltas) {
            if t.is_nan() || t < F::zero() || !t.is_finite() {
                return Err(Error::NegativeTime(t.as_f64()));
            }
            if d as usize > n_causes {
                return Err(Error::CauseOutOfRange { cause: d as usize, n_causes });
            }
        }
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).expect("finite times"));

        let mut table = RiskTable { times: Vec::new(), n_at_risk: Vec::new(), n_events: Vec::new(), n_censored: Vec::new(), n_causes };
        let mut at_risk = times.len();
        let mut i = 0;
        while i < order.len() {
            let t = times[order[i]];
            let mut events = vec![0usize; n_causes];
            let mut censored = 0usize;
            let mut j = i;
            while j < order.len() && times[order[j]] == t {
                match deltas[order[j]] {
                    0 => censored += 1,
                    k => events[k as usize - 1] += 1,
                }
                j += 1;
            }
            table.times.push(t);
            table.n_at_risk.push(at_risk);
            table.n_events.push(events);
            table.n_censored.push(censored);
            at_risk -= j - i;
            i = j;
        }
        Ok(table)
    }

    pub fn total_events(&self, j: usize) -> usize {
        self.n_events[j].iter().sum()
    }

    /// Kaplan–Meier survival for cause `k` (other causes treated as censoring).
    pub fn kaplan_meier_cause(&self, k: usize) -> Result<StepCurve<F>> {
        self.check_cause(k)?;
        self.product_limit(|j| (self.n_events[j][k - 1], self.n_at_risk[j]))
    }

    /// All-cause (event-free) Kaplan–Meier survival.
    pub fn all_cause_survival(&self) -> Result<StepCurve<F>> {
        self.product_limit(|j| (self.total_events(j), self.n_at_risk[j]))
    }

    /// Nelson–Aalen cumulative hazard for cause `k`.
    pub fn nelson_aalen_cause(&self, k: usize) -> Result<StepCurve<F>> {
        self.check_cause(k)?;
        self.hazard_sum(|j| (self.n_events[j][k - 1], self.n_at_risk[j]))
    }

    /// Nelson–Aalen cumulative hazard of any event.
    pub fn nelson_aalen_all(&self) -> Result<StepCurve<F>> {
        self.hazard_sum(|j| (self.total_events(j), self.n_at_risk[j]))
    }

    /// Censoring survival `G(t) = P(C > t)`; censorings at `t` see the risk set net of events at `t`.
    pub fn censoring_survival(&self) -> Result<StepCurve<F>> {
        self.product_limit(|j| (self.n_censored[j], self.n_at_risk[j] - self.total_events(j)))
    }

    /// Censoring cumulative hazard with the same risk-set convention as [`Self::censoring_survival`].
    pub fn censoring_cumulative_hazard(&self) -> Result<StepCurve<F>> {
        self.hazard_sum(|j| (self.n_censored[j], self.n_at_risk[j] - self.total_events(j)))
    }

    /// Aalen–Johansen cumulative incidence of cause `k`.
    pub fn cif(&self, k: usize) -> Result<StepCurve<F>> {
        self.check_cause(k)?;
        let mut s_all = F::one();
        let mut cif = F::zero();
        let mut bps = Vec::new();
        let mut vals = Vec::new();
        for j in 0..self.times.len() {
            let n = F::count(self.n_at_risk[j]);
            let d_all = self.total_events(j);
            let d_k = self.n_events[j][k - 1];
            if d_k > 0 {
                cif = cif + s_all * F::count(d_k) / n;
                bps.push(self.times[j]);
                vals.push(cif);
            }
            if d_all > 0 {
                s_all = s_all * (F::one() - F::count(d_all) / n);
            }
        }
        StepCurve::new_clamped(CurveKind::Cif, F::zero(), bps, vals)
    }

    fn check_cause(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.n_causes {
            return Err(Error::CauseOutOfRange { cause: k, n_causes: self.n_causes });
        }
        Ok(())
    }

    fn product_limit(&self, counts: impl Fn(usize) -> (usize, usize)) -> Result<StepCurve<F>> {
        let mut s = F::one();
        let mut bps = Vec::new();
        let mut vals = Vec::new();
        for j in 0..self.times.len() {
            let (d, n) = counts(j);
            if d > 0 && n > 0 {
                s = s * (F::one() - F::count(d) / F::count(n));
                bps.push(self.times[j]);
                vals.push(s);
            }
        }
        StepCurve::new_clamped(CurveKind::Survival, F::one(), bps, vals)
    }

    fn hazard_sum(&self, counts: impl Fn(usize) -> (usize, usize)) -> Result<StepCurve<F>> {
        let mut h = F::zero();
        let mut bps = Vec::new();
        let mut vals = Vec::new();
        for j in 0..self.times.len() {
            let (d, n) = counts(j);
            if d > 0 && n > 0 {
                h = h + F::count(d) / F::count(n);
                bps.push(self.times[j]);
                vals.push(h);
            }
        }
        StepCurve::new(CurveKind::CumulativeHazard, F::zero(), bps, vals)
    }
}

fn check_binary(events: &[u8]) -> Result<()> {
    if let Some(&bad) = events.iter().find(|&&e| e > 1) {
        return Err(Error::CauseOutOfRange { cause: bad as usize, n_causes: 1 });
    }
    Ok(())
}

/// Product-limit survival estimate.
pub fn kaplan_meier<F: Real>(times: &[F], events: &[u8]) -> Result<StepCurve<F>> {
    check_binary(events)?;
    RiskTable::new(times, events, 1)?.kaplan_meier_cause(1)
}

/// Nelson–Aalen cumulative hazard estimate.
pub fn nelson_aalen<F: Real>(times: &[F], events: &[u8]) -> Result<StepCurve<F>> {
    check_binary(events)?;
    RiskTable::new(times, events, 1)?.nelson_aalen_cause(1)
}

/// Aalen–Johansen cumulative incidence of cause `k`; the number of causes is
/// taken as the largest observed indicator (at least one).
pub fn aalen_johansen_cif<F: Real>(times: &[F], deltas: &[u8], k: usize) -> Result<StepCurve<F>> {
    let n_causes = deltas.iter().copied().max().unwrap_or(0).max(1) as usize;
    RiskTable::new(times, deltas, n_causes)?.cif(k)
}

/// All-cause Kaplan–Meier survival from competing-risk indicators.
pub fn all_cause_survival<F: Real>(times: &[F], deltas: &[u8]) -> Result<StepCurve<F>> {
    let n_causes = deltas.iter().copied().max().unwrap_or(0).max(1) as usize;
    RiskTable::new(times, deltas, n_causes)?.all_cause_survival()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn km_uncensored_is_empirical() {
        let s = kaplan_meier::<f64>(&[1.0, 2.0, 3.0], &[1, 1, 1]).unwrap();
        assert!((s.at(1.5) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn km_no_events_is_one() {
        let s = kaplan_meier::<f64>(&[1.0, 2.0, 3.0], &[0, 0, 0]).unwrap();
        assert_eq!(s.at(0.0), 1.0);
        assert_eq!(s.at(100.0), 1.0);
    }

    #[test]
    fn km_with_censoring_hand_value() {
        // risk sets 3 -> 1 at the two event times: (1 - 1/3)(1 - 1/1) = 0
        let s = kaplan_meier::<f64>(&[1.0, 2.0, 3.0], &[1, 0, 1]).unwrap();
        assert!((s.at(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.at(3.0), 0.0);
    }

    #[test]
    fn km_empty_input() {
        assert!(matches!(kaplan_meier::<f64>(&[], &[]), Err(Error::EmptyCohort)));
    }

    #[test]
    fn km_rejects_cr_indicator() {
        assert!(kaplan_meier::<f64>(&[1.0], &[2]).is_err());
    }

    #[test]
    fn nelson_aalen_values() {
        let h = nelson_aalen::<f64>(&[1.0, 2.0], &[1, 1]).unwrap();
        assert!((h.at(2.0) - 1.5).abs() < 1e-15);
        let h0 = nelson_aalen::<f64>(&[1.0, 2.0], &[0, 0]).unwrap();
        assert_eq!(h0.at(5.0), 0.0);
        let single = nelson_aalen::<f64>(&[5.0], &[1]).unwrap();
        assert_eq!(single.at(5.0), 1.0);
        assert!(((-single.at(5.0)).exp() - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn ties_events_before_censorings() {
        // at t = 1: 4 at risk, one event and one censoring
        let times = [1.0f64, 1.0, 2.0, 3.0];
        let deltas = [1, 0, 1, 0];
        let table = RiskTable::new(&times, &deltas, 1).unwrap();
        assert_eq!(table.n_at_risk, vec![4, 2, 1]);
        let s = table.kaplan_meier_cause(1).unwrap();
        assert!((s.at(1.0) - 0.75).abs() < 1e-15);
        // censoring sees 4 - 1 = 3 at risk at t = 1
        let g = table.censoring_survival().unwrap();
        assert!((g.at(1.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn aalen_johansen_two_rows() {
        let c1 = aalen_johansen_cif::<f64>(&[1.0, 2.0], &[1, 2], 1).unwrap();
        let c2 = aalen_johansen_cif::<f64>(&[1.0, 2.0], &[1, 2], 2).unwrap();
        assert!((c1.at(2.0) - 0.5).abs() < 1e-15);
        assert!((c2.at(2.0) - 0.5).abs() < 1e-15);
        assert!(matches!(aalen_johansen_cif::<f64>(&[1.0, 2.0], &[1, 2], 3), Err(Error::CauseOutOfRange { .. })));
    }

    #[test]
    fn single_cause_cif_is_km_complement() {
        let times = [0.5f64, 1.0, 1.5, 2.0, 2.5, 4.0];
        let ev = [1, 1, 1, 1, 1, 1];
        let km = kaplan_meier(&times, &ev).unwrap();
        let cif = aalen_johansen_cif(&times, &ev, 1).unwrap();
        for &t in &times {
            assert!((cif.at(t) - (1.0 - km.at(t))).abs() < 1e-15);
        }
    }
}
