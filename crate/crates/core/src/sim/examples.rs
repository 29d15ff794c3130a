//! Bundled synthetic specs.

use crate::copula::CopulaFamily;
use crate::error::Result;

use super::spec::{Coupling, SCMSpec, TimeLaw};

fn daily(horizon: usize) -> Vec<f64> {
    (1..=horizon).map(|d| d as f64).collect()
}

/// Survival `exp(-rate * t)` on `times`, with all remaining mass placed at the last time.
fn administrative(rate: f64, times: Vec<f64>) -> Result<TimeLaw> {
    let mut surv: Vec<f64> = times.iter().map(|t| (-rate * t).exp()).collect();
    if let Some(last) = surv.last_mut() {
        *last = 0.0;
    }
    TimeLaw::from_survival(times, &surv)
}

/// Intensive-care analogue: a small minority group (`P(X = 0) = 0.042`), a binary
/// confounder and mediator, in-hospital death over 60 days with a marginal event
/// rate below 10%, and discharge acting as non-informative censoring.
pub fn icu_analogue() -> SCMSpec {
    let p_x0 = 0.042;
    SCMSpec::from_fn(
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        1,
        move |x, z| {
            let pz1 = if x == 0 { 0.5 } else { 0.3 };
            let pz = if z == 1.0 { pz1 } else { 1.0 - pz1 };
            let px = if x == 0 { p_x0 } else { 1.0 - p_x0 };
            px * pz
        },
        |x, z, w| {
            let p1 = 0.3 + 0.2 * f64::from(x) + 0.2 * z;
            if w == 1.0 {
                p1
            } else {
                1.0 - p1
            }
        },
        |x, z, w, _| {
            let rate = 0.0012 * (0.4 * (1.0 - f64::from(x)) + 0.5 * z + 0.6 * w).exp();
            TimeLaw::discretized_exponential(rate, daily(60)).expect("valid law")
        },
        |_, z, _| administrative(0.03 + 0.01 * z, daily(60)).expect("valid law"),
        Coupling::default(),
    )
    .expect("bundled spec is valid")
}

/// Readmission analogue with informative censoring: hospital readmission `T` and
/// censoring `C` are coupled by a Clayton copula with Kendall's `tau`.
pub fn readmission_analogue(tau: f64) -> Result<SCMSpec> {
    let coupling = if tau == 0.0 {
        Coupling::default()
    } else {
        Coupling { family: CopulaFamily::Clayton, tau }
    };
    SCMSpec::from_fn(
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        1,
        |x, z| {
            let pz1 = if x == 0 { 0.55 } else { 0.4 };
            let pz = if z == 1.0 { pz1 } else { 1.0 - pz1 };
            let px = if x == 0 { 0.3 } else { 0.7 };
            px * pz
        },
        |x, z, w| {
            let p1 = 0.35 + 0.15 * f64::from(x) + 0.1 * z;
            if w == 1.0 {
                p1
            } else {
                1.0 - p1
            }
        },
        |x, z, w, _| {
            let rate = 0.012 * (0.3 * f64::from(x) + 0.2 * z + 0.3 * w).exp();
            TimeLaw::discretized_exponential(rate, daily(100)).expect("valid law")
        },
        |_, z, _| administrative(0.01 * (0.1 * z).exp(), daily(100)).expect("valid law"),
        coupling,
    )
}
