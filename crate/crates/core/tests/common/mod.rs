#![allow(dead_code)]

use survfair::copula::CopulaFamily;
use survfair::sim::{Coupling, SCMSpec, TimeLaw};

pub fn days(h: usize) -> Vec<f64> {
    (1..=h).map(|d| d as f64).collect()
}

pub fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn binary(p1: f64, v: f64) -> f64 {
    if v == 1.0 {
        p1
    } else {
        1.0 - p1
    }
}

/// Geometric law on `1..=h` with the remaining mass at `h`.
pub fn geometric(p: f64, h: usize) -> TimeLaw {
    let times = days(h);
    let mut surv: Vec<f64> = times.iter().map(|t| (1.0 - p).powf(*t)).collect();
    *surv.last_mut().unwrap() = 0.0;
    TimeLaw::from_survival(times, &surv).unwrap()
}

/// A 2x2x2 model with explicit hand-set tables and all three pathways active.
pub fn hand_set() -> SCMSpec {
    SCMSpec::from_fn(
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        1,
        |x, z| [[0.30, 0.20], [0.15, 0.35]][x as usize][z as usize],
        |x, z, w| binary([[0.25, 0.45], [0.55, 0.70]][x as usize][z as usize], w),
        |x, z, w, _| geometric(0.02 + 0.02 * f64::from(x) + 0.015 * z + 0.03 * w, 30),
        |x, z, _| geometric(0.01 + 0.01 * f64::from(x) * z, 30),
        Coupling::default(),
    )
    .unwrap()
}

/// Both covariates independent of `X`; only the direct path is active.
pub fn severed() -> SCMSpec {
    SCMSpec::from_fn(
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        1,
        |_, z| 0.5 * binary(0.4, z),
        |_, _, w| binary(0.5, w),
        |x, z, w, _| geometric(0.03 + 0.01 * f64::from(x) + 0.02 * z + 0.02 * w, 30),
        |_, _, _| geometric(0.01, 30),
        Coupling::default(),
    )
    .unwrap()
}

/// Mediator shifted by `X`; confounder and outcome law independent of `X`.
pub fn indirect_only() -> SCMSpec {
    SCMSpec::from_fn(
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        1,
        |_, z| 0.5 * binary(0.4, z),
        |x, _, w| binary(0.2 + 0.5 * f64::from(x), w),
        |_, z, w, _| geometric(0.02 + 0.01 * z + 0.05 * w, 30),
        |_, _, _| geometric(0.01, 30),
        Coupling::default(),
    )
    .unwrap()
}

/// Every table identical across `x`.
pub fn symmetric(n_causes: usize) -> SCMSpec {
    SCMSpec::from_fn(
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        n_causes,
        |_, z| 0.5 * binary(0.35, z),
        |_, z, w| binary(0.4 + 0.2 * z, w),
        |_, z, w, _| geometric(0.02 + 0.01 * z + 0.01 * w, 30),
        |_, _, _| geometric(0.01, 30),
        Coupling::default(),
    )
    .unwrap()
}

/// Two competing causes with distinct dependence on `(x, z, w)`.
pub fn two_cause() -> SCMSpec {
    SCMSpec::from_fn(
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        2,
        |x, z| [[0.30, 0.20], [0.15, 0.35]][x as usize][z as usize],
        |x, z, w| binary([[0.25, 0.45], [0.55, 0.70]][x as usize][z as usize], w),
        |x, z, w, k| {
            if k == 1 {
                geometric(0.015 + 0.015 * f64::from(x) + 0.02 * w, 30)
            } else {
                geometric(0.01 + 0.02 * z + 0.01 * f64::from(x) * w, 30)
            }
        },
        |_, _, _| geometric(0.01, 30),
        Coupling::default(),
    )
    .unwrap()
}

/// Strongly heterogeneous, non-exponential event and censoring laws: a single
/// pooled exponential is a poor fit for either process.
pub fn adversarial() -> SCMSpec {
    SCMSpec::from_fn(
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        1,
        |x, z| 0.5 * binary(if x == 0 { 0.7 } else { 0.3 }, z),
        |x, z, w| binary(0.2 + 0.4 * f64::from(x) + 0.2 * z, w),
        |x, z, w, _| {
            let high = w == 1.0 || (z == 1.0 && x == 1);
            let times = days(40);
            let mut surv: Vec<f64> = times
                .iter()
                .map(|&t| match (high, t < 5.0) {
                    (true, true) => 1.0 - 0.1 * t,
                    (true, false) => 0.5 * (-0.01 * t).exp(),
                    (false, _) => (-0.0002 * t * t).exp(),
                })
                .collect();
            *surv.last_mut().unwrap() = 0.0;
            TimeLaw::from_survival(times, &surv).unwrap()
        },
        |x, _, w| {
            let rate = if w == 1.0 { 0.12 } else { 0.002 } * if x == 1 { 1.5 } else { 0.7 };
            let times = days(40);
            let surv: Vec<f64> = times.iter().map(|&t| if t == 40.0 { 0.0 } else { (-rate * t).exp() }).collect();
            TimeLaw::from_survival(times, &surv).unwrap()
        },
        Coupling::default(),
    )
    .unwrap()
}

pub fn with_coupling(mut spec: SCMSpec, family: CopulaFamily, tau: f64) -> SCMSpec {
    spec.coupling = Coupling { family, tau };
    spec.validate().unwrap();
    spec
}
