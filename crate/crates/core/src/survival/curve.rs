use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// What a [`StepCurve`] represents; fixes the invariants checked at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Survival,
    CumulativeHazard,
    Cif,
}

/// Right-continuous step function on `[0, inf)`.
///
/// The value on `[0, breakpoints[0])` is `value_at_zero`; on
/// `[breakpoints[j], breakpoints[j+1])` it is `values[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCurve<F> {
    kind: CurveKind,
    value_at_zero: F,
    breakpoints: Vec<F>,
    values: Vec<F>,
}

fn tolerance<F: Real>() -> F {
    F::epsilon() * F::lit(256.0)
}

impl<F: Real> StepCurve<F> {
    pub fn new(kind: CurveKind, value_at_zero: F, breakpoints: Vec<F>, values: Vec<F>) -> Result<Self> {
        let curve = StepCurve { kind, value_at_zero, breakpoints, values };
        curve.validate()?;
        Ok(curve)
    }

    /// Constant curve with no breakpoints.
    pub fn constant(kind: CurveKind, value: F) -> Result<Self> {
        Self::new(kind, value, Vec::new(), Vec::new())
    }

    /// Builds a curve from possibly tiny numerical violations of the kind's
    /// invariants, clamping values to the admissible range and enforcing
    /// monotonicity by a running min/max. Breakpoints must still be valid.
    pub fn new_clamped(kind: CurveKind, value_at_zero: F, breakpoints: Vec<F>, mut values: Vec<F>) -> Result<Self> {
        let (lo, hi) = match kind {
            CurveKind::Survival | CurveKind::Cif => (F::zero(), F::one()),
            CurveKind::CumulativeHazard => (F::zero(), F::infinity()),
        };
        let start = value_at_zero.max(lo).min(hi);
        let mut prev = start;
        for v in values.iter_mut() {
            let mut c = v.max(lo).min(hi);
            c = match kind {
                CurveKind::Survival => c.min(prev),
                _ => c.max(prev),
            };
            *v = c;
            prev = c;
        }
        Self::new(kind, start, breakpoints, values)
    }

    fn validate(&self) -> Result<()> {
        let tol = tolerance::<F>();
        if self.breakpoints.len() != self.values.len() {
            return Err(Error::InvalidCurve(format!(
                "{} breakpoints but {} values",
                self.breakpoints.len(),
                self.values.len()
            )));
        }
        let mut prev_t: Option<F> = None;
        for &t in &self.breakpoints {
            if !t.is_finite() || t < F::zero() {
                return Err(Error::InvalidCurve(format!("breakpoint {t} not a finite nonnegative time")));
            }
            if let Some(p) = prev_t {
                if t <= p {
                    return Err(Error::InvalidCurve(format!("breakpoints not strictly increasing at {t}")));
                }
            }
            prev_t = Some(t);
        }
        let start = self.value_at_zero;
        match self.kind {
            CurveKind::Survival => {
                if (start - F::one()).abs() > tol {
                    return Err(Error::InvalidCurve(format!("survival curve starts at {start}, not 1")));
                }
            }
            CurveKind::CumulativeHazard | CurveKind::Cif => {
                if start.abs() > tol {
                    return Err(Error::InvalidCurve(format!("{:?} curve starts at {start}, not 0", self.kind)));
                }
            }
        }
        let mut prev = start;
        for (&t, &v) in self.breakpoints.iter().zip(&self.values) {
            if !v.is_finite() {
                return Err(Error::InvalidCurve(format!("non-finite value at t = {t}")));
            }
            let ok = match self.kind {
                CurveKind::Survival => v <= prev + tol && v >= -tol,
                CurveKind::Cif => v >= prev - tol && v <= F::one() + tol,
                CurveKind::CumulativeHazard => v >= prev - tol,
            };
            if !ok {
                return Err(Error::InvalidCurve(format!(
                    "{:?} invariant violated at t = {t}: {prev} -> {v}",
                    self.kind
                )));
            }
            prev = v;
        }
        Ok(())
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn value_at_zero(&self) -> F {
        self.value_at_zero
    }

    pub fn breakpoints(&self) -> &[F] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    /// Right-continuous evaluation.
    pub fn evaluate(&self, t: F) -> Result<F> {
        if t < F::zero() || t.is_nan() {
            return Err(Error::NegativeTime(t.as_f64()));
        }
        Ok(self.at(t))
    }

    /// Right-continuous evaluation without the sign check; `t < 0` yields the initial value.
    #[inline]
    pub fn at(&self, t: F) -> F {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        if idx == 0 {
            self.value_at_zero
        } else {
            self.values[idx - 1]
        }
    }

    /// Value just before `t` (left limit).
    #[inline]
    pub fn left_limit(&self, t: F) -> F {
        let idx = self.breakpoints.partition_point(|&b| b < t);
        if idx == 0 {
            self.value_at_zero
        } else {
            self.values[idx - 1]
        }
    }

    /// Curve with breakpoints exactly at `grid`, carrying the evaluated values.
    pub fn restrict(&self, grid: &[F]) -> Result<Self> {
        let values = grid.iter().map(|&t| self.evaluate(t)).collect::<Result<Vec<_>>>()?;
        Self::new(self.kind, self.value_at_zero, grid.to_vec(), values)
    }

    /// Exact integral of the curve over `[0, horizon]`; for survival curves this is
    /// the restricted mean survival time `E[min(T, horizon)]`.
    pub fn rmst(&self, horizon: F) -> Result<F> {
        if horizon < F::zero() || horizon.is_nan() {
            return Err(Error::NegativeTime(horizon.as_f64()));
        }
        Ok(self.integral(horizon))
    }

    pub(crate) fn integral(&self, horizon: F) -> F {
        let mut total = F::zero();
        let mut left = F::zero();
        let mut level = self.value_at_zero;
        for (&b, &v) in self.breakpoints.iter().zip(&self.values) {
            if b >= horizon {
                break;
            }
            total = total + (b - left) * level;
            left = b;
            level = v;
        }
        if horizon > left {
            total = total + (horizon - left) * level;
        }
        total
    }

    /// Applies `f` pointwise, producing a curve of another kind.
    pub fn map(&self, kind: CurveKind, f: impl Fn(F) -> F) -> Result<Self> {
        Self::new(
            kind,
            f(self.value_at_zero),
            self.breakpoints.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Writes `t,value` rows; the initial value is emitted at `t = 0` unless a breakpoint sits there.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,value")?;
        if self.breakpoints.first().map_or(true, |&b| b > F::zero()) {
            writeln!(out, "0,{}", self.value_at_zero)?;
        }
        for (t, v) in self.breakpoints.iter().zip(&self.values) {
            writeln!(out, "{t},{v}")?;
        }
        Ok(())
    }
}

/// Union of the breakpoints of several curves, sorted and deduplicated.
pub fn union_breakpoints<F: Real>(curves: &[&StepCurve<F>]) -> Vec<F> {
    let mut all: Vec<F> = curves.iter().flat_map(|c| c.breakpoints().iter().copied()).collect();
    all.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    all.dedup();
    all
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surv() -> StepCurve<f64> {
        StepCurve::new(CurveKind::Survival, 1.0, vec![1.0, 2.0, 3.0], vec![2.0 / 3.0, 1.0 / 3.0, 0.0]).unwrap()
    }

    #[test]
    fn right_continuous_evaluation() {
        let c = surv();
        assert_eq!(c.at(0.5), 1.0);
        assert_eq!(c.at(1.0), 2.0 / 3.0);
        assert_eq!(c.left_limit(1.0), 1.0);
        assert_eq!(c.at(1.5), 2.0 / 3.0);
        assert_eq!(c.at(10.0), 0.0);
    }

    #[test]
    fn negative_time_rejected() {
        assert!(matches!(surv().evaluate(-1.0), Err(Error::NegativeTime(_))));
        assert!(surv().rmst(-0.1).is_err());
    }

    #[test]
    fn rmst_cases() {
        let one = StepCurve::<f64>::constant(CurveKind::Survival, 1.0).unwrap();
        assert_eq!(one.rmst(4.0).unwrap(), 4.0);
        let drop = StepCurve::new(CurveKind::Survival, 1.0, vec![2.0], vec![0.0]).unwrap();
        assert_eq!(drop.rmst(5.0).unwrap(), 2.0);
        assert!((surv().rmst(3.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((surv().rmst(1.5).unwrap() - (1.0 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn kind_invariants_enforced() {
        assert!(StepCurve::new(CurveKind::Survival, 1.0, vec![1.0], vec![1.2]).is_err());
        assert!(StepCurve::new(CurveKind::Survival, 0.9, vec![], vec![]).is_err());
        assert!(StepCurve::new(CurveKind::Cif, 0.0, vec![1.0, 2.0], vec![0.5, 0.4]).is_err());
        assert!(StepCurve::new(CurveKind::CumulativeHazard, 0.0, vec![1.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(StepCurve::new(CurveKind::CumulativeHazard, 0.0, vec![1.0, 2.0], vec![0.5, 3.0]).is_ok());
    }

    #[test]
    fn restrict_matches_evaluate_on_grid() {
        let c = surv();
        let grid = [0.0, 0.5, 1.0, 2.5, 7.0];
        let r = c.restrict(&grid).unwrap();
        for &g in &grid {
            assert_eq!(r.at(g), c.at(g));
        }
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        surv().write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t,value\n0,1\n1,0.6666666666666666\n"));
    }

    #[test]
    fn works_in_single_precision() {
        let c = StepCurve::<f32>::new(CurveKind::Survival, 1.0, vec![1.0, 2.0], vec![0.5, 0.25]).unwrap();
        assert!((c.rmst(3.0).unwrap() - 1.75).abs() < 1e-6);
    }
}
