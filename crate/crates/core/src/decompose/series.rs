use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::query::{FunctionalKind, Query};
use crate::scalar::Real;

const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Plugin,
    DoublyRobust,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Difference,
    Ratio,
}

/// Potential-outcome curves for several queries on a shared grid, optionally
/// with the joint sampling covariance of the estimates at each grid time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoSet<F> {
    pub grid: Vec<F>,
    pub functional: FunctionalKind,
    pub estimator: EstimatorKind,
    pub queries: Vec<Query>,
    /// `estimates[q][j]` for `queries[q]` at `grid[j]`.
    pub estimates: Vec<Vec<F>>,
    /// `covariance[j][a * q + b]`; already divided by the sample size.
    pub covariance: Option<Vec<Vec<F>>>,
}

impl<F: Real> PoSet<F> {
    pub fn new(grid: Vec<F>, functional: FunctionalKind, estimator: EstimatorKind) -> Self {
        PoSet { grid, functional, estimator, queries: Vec::new(), estimates: Vec::new(), covariance: None }
    }

    pub fn insert(&mut self, query: Query, values: Vec<F>) -> Result<()> {
        if values.len() != self.grid.len() {
            return Err(Error::GridMismatch(format!("curve for {query} has {} values on a grid of {}", values.len(), self.grid.len())));
        }
        if self.covariance.is_some() {
            return Err(Error::InvalidParameter("cannot add curves after the covariance is set".into()));
        }
        match self.index_of(query) {
            Some(i) => self.estimates[i] = values,
            None => {
                self.queries.push(query);
                self.estimates.push(values);
            }
        }
        Ok(())
    }

    pub fn set_covariance(&mut self, covariance: Vec<Vec<F>>) -> Result<()> {
        let q = self.queries.len();
        if covariance.len() != self.grid.len() || covariance.iter().any(|c| c.len() != q * q) {
            return Err(Error::GridMismatch("covariance dimensions do not match the curves".into()));
        }
        self.covariance = Some(covariance);
        Ok(())
    }

    pub fn index_of(&self, query: Query) -> Option<usize> {
        self.queries.iter().position(|&q| q == query)
    }

    pub fn get(&self, query: Query) -> Option<&[F]> {
        self.index_of(query).map(|i| self.estimates[i].as_slice())
    }

    fn require(&self, query: Query) -> Result<usize> {
        self.index_of(query).ok_or_else(|| Error::MissingQuery(query.to_string()))
    }

    pub fn covariance(&self, j: usize, a: Query, b: Query) -> Option<F> {
        let cov = self.covariance.as_ref()?;
        let (ia, ib) = (self.index_of(a)?, self.index_of(b)?);
        Some(cov[j][ia * self.queries.len() + ib])
    }

    /// Standard errors of one curve.
    pub fn se(&self, query: Query) -> Option<Vec<F>> {
        (0..self.grid.len()).map(|j| self.covariance(j, query, query).map(|v| v.max(F::zero()).sqrt())).collect()
    }

    /// Writes `t,estimate,se,lo,hi` for one query; `se`, `lo`, `hi` are empty without a covariance.
    pub fn write_curve_csv<W: Write>(&self, query: Query, mut out: W, comments: &[String]) -> Result<()> {
        let i = self.require(query)?;
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "t,estimate,se,lo,hi")?;
        let se = self.se(query);
        let z = F::lit(Z95);
        for (j, (&t, &v)) in self.grid.iter().zip(&self.estimates[i]).enumerate() {
            match &se {
                Some(s) => writeln!(out, "{t},{v},{},{},{}", s[j], v - z * s[j], v + z * s[j])?,
                None => writeln!(out, "{t},{v},,,")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Total,
    Direct,
    Indirect,
    Spurious,
}

impl Effect {
    pub fn name(&self, scale: Scale) -> &'static str {
        match (scale, self) {
            (_, Effect::Total) => "tv",
            (Scale::Difference, Effect::Direct) => "x_de",
            (Scale::Difference, Effect::Indirect) => "x_ie",
            (Scale::Difference, Effect::Spurious) => "x_se",
            (Scale::Ratio, Effect::Direct) => "x_dr",
            (Scale::Ratio, Effect::Indirect) => "x_ir",
            (Scale::Ratio, Effect::Spurious) => "x_sr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectSeries<F> {
    pub effect: Effect,
    pub name: String,
    pub estimate: Vec<F>,
    pub se: Option<Vec<F>>,
    pub lo: Option<Vec<F>>,
    pub hi: Option<Vec<F>>,
}

/// Time-resolved total variation and its direct, indirect and spurious parts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionSeries<F> {
    pub grid: Vec<F>,
    pub scale: Scale,
    pub functional: FunctionalKind,
    pub estimator: EstimatorKind,
    pub x0: u8,
    pub x1: u8,
    /// Ordered total, direct, indirect, spurious.
    pub effects: Vec<EffectSeries<F>>,
}

impl<F: Real> DecompositionSeries<F> {
    pub fn effect(&self, e: Effect) -> &EffectSeries<F> {
        self.effects.iter().find(|s| s.effect == e).expect("all four effects present")
    }

    pub fn total(&self) -> &[F] {
        &self.effect(Effect::Total).estimate
    }

    pub fn direct(&self) -> &[F] {
        &self.effect(Effect::Direct).estimate
    }

    pub fn indirect(&self) -> &[F] {
        &self.effect(Effect::Indirect).estimate
    }

    pub fn spurious(&self) -> &[F] {
        &self.effect(Effect::Spurious).estimate
    }

    /// Largest violation of the scale's decomposition identity over the grid.
    pub fn identity_residual(&self) -> F {
        let (tv, de, ie, se) = (self.total(), self.direct(), self.indirect(), self.spurious());
        (0..self.grid.len()).fold(F::zero(), |acc, j| {
            let r = match self.scale {
                Scale::Difference => tv[j] - (de[j] - ie[j] - se[j]),
                Scale::Ratio => tv[j] - de[j] / ie[j] / se[j],
            };
            acc.max(r.abs())
        })
    }

    /// Long format `t,effect,estimate,se,lo,hi`.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "t,effect,estimate,se,lo,hi")?;
        self.write_rows(&mut out, "")
    }

    /// Rows without the header; `prefix` is prepended to the effect name.
    pub fn write_rows<W: Write>(&self, out: &mut W, prefix: &str) -> Result<()> {
        for (j, &t) in self.grid.iter().enumerate() {
            for s in &self.effects {
                let opt = |v: &Option<Vec<F>>| v.as_ref().map(|v| v[j].to_string()).unwrap_or_default();
                writeln!(out, "{t},{prefix}{},{},{},{},{}", s.name, s.estimate[j], opt(&s.se), opt(&s.lo), opt(&s.hi))?;
            }
        }
        Ok(())
    }
}

/// Each effect as a contrast `PO(a) (op) PO(b)` of the decomposition queries;
/// the same pairs serve both scales.
fn contrasts(x0: u8, x1: u8) -> [(Effect, Query, Query); 4] {
    let [q100, q000, q110, q111] = Query::decomposition_set(x0, x1);
    [
        (Effect::Total, q111, q000),
        (Effect::Direct, q100, q000),
        (Effect::Indirect, q100, q110),
        (Effect::Spurious, q110, q111),
    ]
}

fn check_decomposable<F: Real>(po: &PoSet<F>, x0: u8, x1: u8) -> Result<()> {
    if x0 > 1 || x1 > 1 || x0 == x1 {
        return Err(Error::InvalidParameter(format!("groups x0 = {x0}, x1 = {x1} must be distinct binary labels")));
    }
    for q in Query::decomposition_set(x0, x1) {
        po.require(q)?;
    }
    Ok(())
}

/// `x-DE = PO(x1,x0,x0) - PO(x0,x0,x0)`, `x-IE = PO(x1,x0,x0) - PO(x1,x1,x0)`,
/// `x-SE = PO(x1,x1,x0) - PO(x1,x1,x1)`, `TV = PO(x1,x1,x1) - PO(x0,x0,x0)`,
/// so that `TV = x-DE - x-IE - x-SE`. Standard errors use the joint covariance.
pub fn decompose_difference<F: Real>(po: &PoSet<F>, x0: u8, x1: u8) -> Result<DecompositionSeries<F>> {
    check_decomposable(po, x0, x1)?;
    let z = F::lit(Z95);
    let effects = contrasts(x0, x1)
        .into_iter()
        .map(|(effect, a, b)| {
            let (va, vb) = (po.get(a).expect("checked"), po.get(b).expect("checked"));
            let estimate: Vec<F> = va.iter().zip(vb).map(|(&p, &q)| p - q).collect();
            let se: Option<Vec<F>> = po.covariance.as_ref().map(|_| {
                (0..po.grid.len())
                    .map(|j| {
                        let v = po.covariance(j, a, a).expect("cov") + po.covariance(j, b, b).expect("cov")
                            - F::lit(2.0) * po.covariance(j, a, b).expect("cov");
                        v.max(F::zero()).sqrt()
                    })
                    .collect()
            });
            let lo = se.as_ref().map(|s| estimate.iter().zip(s).map(|(&e, &s)| e - z * s).collect());
            let hi = se.as_ref().map(|s| estimate.iter().zip(s).map(|(&e, &s)| e + z * s).collect());
            EffectSeries { effect, name: effect.name(Scale::Difference).to_string(), estimate, se, lo, hi }
        })
        .collect();
    Ok(DecompositionSeries { grid: po.grid.clone(), scale: Scale::Difference, functional: po.functional, estimator: po.estimator, x0, x1, effects })
}

/// `x-DR = PO(x1,x0,x0) / PO(x0,x0,x0)`, `x-IR = PO(x1,x0,x0) / PO(x1,x1,x0)`,
/// `x-SR = PO(x1,x1,x0) / PO(x1,x1,x1)`, `TV = PO(x1,x1,x1) / PO(x0,x0,x0)`,
/// so that `TV = x-DR / x-IR / x-SR`. Intervals use the delta method on the log scale.
pub fn decompose_ratio<F: Real>(po: &PoSet<F>, x0: u8, x1: u8) -> Result<DecompositionSeries<F>> {
    check_decomposable(po, x0, x1)?;
    for q in Query::decomposition_set(x0, x1) {
        let v = po.get(q).expect("checked");
        if let Some(j) = v.iter().position(|&p| !(p > F::zero())) {
            return Err(Error::RatioUndefined(po.grid[j].as_f64()));
        }
    }
    let z = F::lit(Z95);
    let effects = contrasts(x0, x1)
        .into_iter()
        .map(|(effect, a, b)| {
            let (va, vb) = (po.get(a).expect("checked"), po.get(b).expect("checked"));
            let estimate: Vec<F> = va.iter().zip(vb).map(|(&p, &q)| p / q).collect();
            let log_se: Option<Vec<F>> = po.covariance.as_ref().map(|_| {
                (0..po.grid.len())
                    .map(|j| {
                        let (pa, pb) = (va[j], vb[j]);
                        let v = po.covariance(j, a, a).expect("cov") / (pa * pa) + po.covariance(j, b, b).expect("cov") / (pb * pb)
                            - F::lit(2.0) * po.covariance(j, a, b).expect("cov") / (pa * pb);
                        v.max(F::zero()).sqrt()
                    })
                    .collect()
            });
            let se = log_se.as_ref().map(|s| estimate.iter().zip(s).map(|(&e, &s)| e * s).collect());
            let lo = log_se.as_ref().map(|s| estimate.iter().zip(s).map(|(&e, &s)| e * (-z * s).exp()).collect());
            let hi = log_se.as_ref().map(|s| estimate.iter().zip(s).map(|(&e, &s)| e * (z * s).exp()).collect());
            EffectSeries { effect, name: effect.name(Scale::Ratio).to_string(), estimate, se, lo, hi }
        })
        .collect();
    Ok(DecompositionSeries { grid: po.grid.clone(), scale: Scale::Ratio, functional: po.functional, estimator: po.estimator, x0, x1, effects })
}
