use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::copula::{CopulaFamily, CopulaSpec};
use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// Discrete law of a latent time on a finite grid, with residual mass at `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeLaw {
    pub times: Vec<f64>,
    pub probs: Vec<f64>,
    #[serde(default)]
    pub never: f64,
}

impl TimeLaw {
    pub fn new(times: Vec<f64>, probs: Vec<f64>, never: f64) -> Result<Self> {
        let law = TimeLaw { times, probs, never };
        law.validate("time law")?;
        Ok(law)
    }

    /// Degenerate at `+inf`.
    pub fn never() -> Self {
        TimeLaw { times: Vec::new(), probs: Vec::new(), never: 1.0 }
    }

    /// Point mass at `t`.
    pub fn point(t: f64) -> Self {
        TimeLaw { times: vec![t], probs: vec![1.0], never: 0.0 }
    }

    /// Law with survival values `surv[j] = P(T > times[j])`; the remaining mass sits at `+inf`.
    pub fn from_survival(times: Vec<f64>, surv: &[f64]) -> Result<Self> {
        if times.len() != surv.len() {
            return Err(Error::LengthMismatch("times vs survival values".into()));
        }
        let mut prev = 1.0;
        let mut probs = Vec::with_capacity(surv.len());
        for &s in surv {
            probs.push(prev - s);
            prev = s;
        }
        Self::new(times, probs, prev)
    }

    /// Exponential survival `exp(-rate * t)` observed on `times`.
    pub fn discretized_exponential(rate: f64, times: Vec<f64>) -> Result<Self> {
        let surv: Vec<f64> = times.iter().map(|t| (-rate * t).exp()).collect();
        Self::from_survival(times, &surv)
    }

    pub(crate) fn validate(&self, table: &str) -> Result<()> {
        let err = |reason: String| Error::InvalidSpec { table: table.to_string(), reason };
        if self.times.len() != self.probs.len() {
            return Err(err("times and probs differ in length".into()));
        }
        for (j, &t) in self.times.iter().enumerate() {
            if !(t.is_finite() && t >= 0.0) {
                return Err(err(format!("time {t} must be finite and nonnegative")));
            }
            if j > 0 && t <= self.times[j - 1] {
                return Err(err("times must be strictly increasing".into()));
            }
        }
        if self.probs.iter().chain(std::iter::once(&self.never)).any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(err("probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = self.probs.iter().sum::<f64>() + self.never;
        if (total - 1.0).abs() > SUM_TOL {
            return Err(err(format!("probabilities sum to {total}, not 1")));
        }
        Ok(())
    }

    /// `P(T > t)`.
    pub fn survival(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&u| u <= t);
        self.never + self.probs[idx..].iter().sum::<f64>()
    }

    /// `P(T >= t)`.
    pub fn survival_left(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&u| u < t);
        self.never + self.probs[idx..].iter().sum::<f64>()
    }

    /// `P(T > t_j)` at every support point.
    pub(crate) fn survival_at_support(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.times.len()];
        let mut acc = self.never;
        for j in (0..self.times.len()).rev() {
            out[j] = acc;
            acc += self.probs[j];
        }
        out
    }
}

/// Copula linking the primary event time `T_1` with the censoring time `C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub family: CopulaFamily,
    #[serde(default)]
    pub tau: f64,
}

impl Default for Coupling {
    fn default() -> Self {
        Coupling { family: CopulaFamily::Independence, tau: 0.0 }
    }
}

impl Coupling {
    pub fn copula(&self) -> Result<CopulaSpec<f64>> {
        CopulaSpec::new(self.family, self.tau).map_err(|e| Error::InvalidSpec { table: "coupling".into(), reason: e.to_string() })
    }
}

/// Discrete structural causal model over `X -> Z?`, `(X, Z) -> W`, `(X, Z, W) -> (T, C)`.
///
/// Tables are keyed by strings `"x|z"` and `"x|z|w"`, where the covariate
/// codes are rendered with the default float formatting (`0`, `1`, `2.5`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SCMSpec {
    pub z_support: Vec<f64>,
    pub w_support: Vec<f64>,
    #[serde(default = "one")]
    pub n_causes: usize,
    pub p_xz: BTreeMap<String, f64>,
    pub p_w_given_xz: BTreeMap<String, f64>,
    /// One law per cause for each `"x|z|w"`.
    pub event_law: BTreeMap<String, Vec<TimeLaw>>,
    pub censor_law: BTreeMap<String, TimeLaw>,
    #[serde(default)]
    pub coupling: Coupling,
}

fn one() -> usize {
    1
}

pub(crate) fn key2(x: u8, z: f64) -> String {
    format!("{x}|{z}")
}

pub(crate) fn key3(x: u8, z: f64, w: f64) -> String {
    format!("{x}|{z}|{w}")
}

impl SCMSpec {
    /// Builds a validated spec from closures over the supports.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fn(
        z_support: Vec<f64>,
        w_support: Vec<f64>,
        n_causes: usize,
        p_xz: impl Fn(u8, f64) -> f64,
        p_w: impl Fn(u8, f64, f64) -> f64,
        event: impl Fn(u8, f64, f64, usize) -> TimeLaw,
        censor: impl Fn(u8, f64, f64) -> TimeLaw,
        coupling: Coupling,
    ) -> Result<Self> {
        let mut spec = SCMSpec {
            z_support,
            w_support,
            n_causes,
            p_xz: BTreeMap::new(),
            p_w_given_xz: BTreeMap::new(),
            event_law: BTreeMap::new(),
            censor_law: BTreeMap::new(),
            coupling,
        };
        for x in 0..2u8 {
            for &z in &spec.z_support {
                spec.p_xz.insert(key2(x, z), p_xz(x, z));
                for &w in &spec.w_support {
                    spec.p_w_given_xz.insert(key3(x, z, w), p_w(x, z, w));
                    spec.event_law.insert(key3(x, z, w), (1..=n_causes).map(|k| event(x, z, w, k)).collect());
                    spec.censor_law.insert(key3(x, z, w), censor(x, z, w));
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: SCMSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks every table; the error names the first violated table.
    pub fn validate(&self) -> Result<()> {
        let err = |table: &str, reason: String| Error::InvalidSpec { table: table.to_string(), reason };
        if self.n_causes == 0 {
            return Err(err("n_causes", "must be at least 1".into()));
        }
        if self.n_causes > u8::MAX as usize {
            return Err(err("n_causes", "too many causes".into()));
        }
        for (name, sup) in [("z_support", &self.z_support), ("w_support", &self.w_support)] {
            if sup.is_empty() {
                return Err(err(name, "support is empty".into()));
            }
            let mut sorted = sup.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            if sorted.len() != sup.len() || sup.iter().any(|v| !v.is_finite()) {
                return Err(err(name, "values must be distinct and finite".into()));
            }
        }
        self.coupling.copula()?;

        let mut total = 0.0;
        for x in 0..2u8 {
            for &z in &self.z_support {
                let k = key2(x, z);
                let p = *self.p_xz.get(&k).ok_or_else(|| err("p_xz", format!("missing entry `{k}`")))?;
                if !(p >= 0.0 && p.is_finite()) {
                    return Err(err("p_xz", format!("entry `{k}` = {p} is not a probability")));
                }
                total += p;
            }
        }
        if (total - 1.0).abs() > SUM_TOL {
            return Err(err("p_xz", format!("sums to {total}, not 1")));
        }
        if self.p_xz.len() != 2 * self.z_support.len() {
            return Err(err("p_xz", "has entries outside the support".into()));
        }

        for x in 0..2u8 {
            for &z in &self.z_support {
                let mut s = 0.0;
                for &w in &self.w_support {
                    let k = key3(x, z, w);
                    let p = *self.p_w_given_xz.get(&k).ok_or_else(|| err("p_w_given_xz", format!("missing entry `{k}`")))?;
                    if !(p >= 0.0 && p.is_finite()) {
                        return Err(err("p_w_given_xz", format!("entry `{k}` = {p} is not a probability")));
                    }
                    s += p;

                    let laws = self.event_law.get(&k).ok_or_else(|| err("event_law", format!("missing entry `{k}`")))?;
                    if laws.len() != self.n_causes {
                        return Err(err("event_law", format!("entry `{k}` has {} laws for {} causes", laws.len(), self.n_causes)));
                    }
                    for (c, law) in laws.iter().enumerate() {
                        law.validate(&format!("event_law[{k}][cause {}]", c + 1))?;
                    }
                    let cens = self.censor_law.get(&k).ok_or_else(|| err("censor_law", format!("missing entry `{k}`")))?;
                    cens.validate(&format!("censor_law[{k}]"))?;
                    let all_never = laws.iter().map(|l| l.never).product::<f64>() * cens.never;
                    if all_never > 0.0 {
                        return Err(err("event_law", format!("entry `{k}`: every latent time is infinite with positive probability")));
                    }
                }
                if (s - 1.0).abs() > SUM_TOL {
                    return Err(err("p_w_given_xz", format!("conditional on `{}` sums to {s}, not 1", key2(x, z))));
                }
            }
        }
        let cells = 2 * self.z_support.len() * self.w_support.len();
        if self.p_w_given_xz.len() != cells || self.event_law.len() != cells || self.censor_law.len() != cells {
            return Err(err("p_w_given_xz", "tables have entries outside the support".into()));
        }
        Ok(())
    }

    pub fn p_xz(&self, x: u8, z: f64) -> f64 {
        self.p_xz[&key2(x, z)]
    }

    pub fn p_x(&self, x: u8) -> f64 {
        self.z_support.iter().map(|&z| self.p_xz(x, z)).sum()
    }

    /// `P(Z = z | X = x)`; `None` when `P(X = x) = 0`.
    pub fn p_z_given_x(&self, x: u8, z: f64) -> Option<f64> {
        let px = self.p_x(x);
        (px > 0.0).then(|| self.p_xz(x, z) / px)
    }

    pub fn p_w_given_xz(&self, x: u8, z: f64, w: f64) -> f64 {
        self.p_w_given_xz[&key3(x, z, w)]
    }

    pub fn event_law(&self, x: u8, z: f64, w: f64, cause: usize) -> &TimeLaw {
        &self.event_law[&key3(x, z, w)][cause - 1]
    }

    pub fn censor_law(&self, x: u8, z: f64, w: f64) -> &TimeLaw {
        &self.censor_law[&key3(x, z, w)]
    }

    /// Union of all event and censoring support times, sorted.
    pub fn time_support(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self
            .event_law
            .values()
            .flatten()
            .chain(self.censor_law.values())
            .flat_map(|l| l.times.iter().copied())
            .collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    /// Union of the primary-event support times, sorted.
    pub fn event_time_support(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.event_law.values().flat_map(|v| v[0].times.iter().copied()).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}
