use crate::decompose::{decompose_difference, DecompositionSeries, EstimatorKind, PoSet};
use crate::error::{Error, Result};
use crate::query::{FunctionalKind, Query};

use super::spec::{SCMSpec, TimeLaw};

/// `int_0^h P(T > u) du` for a discrete law.
fn law_rmst(law: &TimeLaw, h: f64) -> f64 {
    let mut total = 0.0;
    let mut left = 0.0;
    let mut level = 1.0;
    for (&t, &p) in law.times.iter().zip(&law.probs) {
        if t >= h {
            break;
        }
        total += (t - left) * level;
        left = t;
        level -= p;
    }
    total + (h - left).max(0.0) * level
}

/// `E[Phi(t) | X = x, Z = z, W = w]` computed from the tables.
pub fn conditional_functional(spec: &SCMSpec, x: u8, z: f64, w: f64, functional: FunctionalKind, t: f64) -> Result<f64> {
    functional.validate(spec.n_causes)?;
    let law = |k: usize| spec.event_law(x, z, w, k);
    Ok(match functional {
        FunctionalKind::Survival => law(1).survival(t),
        FunctionalKind::AllCauseSurvival => (1..=spec.n_causes).map(|k| law(k).survival(t)).product(),
        FunctionalKind::Rmst { horizon } => law_rmst(law(1), t.min(horizon)),
        FunctionalKind::CumulativeHazard => {
            let l = law(1);
            l.times
                .iter()
                .zip(&l.probs)
                .take_while(|(&u, _)| u <= t)
                .map(|(&u, &p)| {
                    let at_risk = l.survival_left(u);
                    if at_risk > 0.0 {
                        p / at_risk
                    } else {
                        0.0
                    }
                })
                .sum()
        }
        FunctionalKind::Cif { cause } => {
            let lk = law(cause);
            let mut total = 0.0;
            for (&u, &p) in lk.times.iter().zip(&lk.probs) {
                if u > t {
                    break;
                }
                // lower-index causes must strictly exceed u, higher-index causes may tie
                let mut win = p;
                for i in 1..=spec.n_causes {
                    if i < cause {
                        win *= law(i).survival(u);
                    } else if i > cause {
                        win *= law(i).survival_left(u);
                    }
                }
                total += win;
            }
            total
        }
    })
}

/// Exact `sum_{z,w} E[Phi(t) | x_y, z, w] P(w | x_w, z) P(z | x_z)`.
pub fn oracle_potential_outcome(spec: &SCMSpec, query: Query, functional: FunctionalKind, t: f64) -> Result<f64> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    let mut total = 0.0;
    for &z in &spec.z_support {
        let pz = spec
            .p_z_given_x(query.x_z, z)
            .ok_or_else(|| Error::DegenerateGroup(format!("P(X = {}) = 0 in the spec", query.x_z)))?;
        if pz == 0.0 {
            continue;
        }
        for &w in &spec.w_support {
            let pw = spec.p_w_given_xz(query.x_w, z, w);
            if pw == 0.0 {
                continue;
            }
            total += conditional_functional(spec, query.x_y, z, w, functional, t)? * pw * pz;
        }
    }
    Ok(total)
}

pub fn oracle_po_curve(spec: &SCMSpec, query: Query, functional: FunctionalKind, grid: &[f64]) -> Result<Vec<f64>> {
    grid.iter().map(|&t| oracle_potential_outcome(spec, query, functional, t)).collect()
}

/// Oracle curves for the given queries on a shared grid.
pub fn oracle_po_set(spec: &SCMSpec, queries: &[Query], functional: FunctionalKind, grid: &[f64]) -> Result<PoSet<f64>> {
    let mut set = PoSet::new(grid.to_vec(), functional, EstimatorKind::Oracle);
    for &q in queries {
        set.insert(q, oracle_po_curve(spec, q, functional, grid)?)?;
    }
    Ok(set)
}

/// Exact difference-scale decomposition for the transition `x0 = 0 -> x1 = 1`.
pub fn oracle_ground_truth_decomposition(spec: &SCMSpec, grid: &[f64], functional: FunctionalKind) -> Result<DecompositionSeries<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
    }
    let set = oracle_po_set(spec, &Query::decomposition_set(0, 1), functional, grid)?;
    decompose_difference(&set, 0, 1)
}

/// Exact `P(delta = d)` for `d = 0..=K` under the independence coupling.
pub fn observed_delta_probabilities(spec: &SCMSpec) -> Result<Vec<f64>> {
    if spec.coupling.tau != 0.0 {
        return Err(Error::InvalidParameter("exact delta probabilities require the independence coupling".into()));
    }
    let k_max = spec.n_causes;
    let mut out = vec![0.0; k_max + 1];
    for x in 0..2u8 {
        for &z in &spec.z_support {
            let pxz = spec.p_xz(x, z);
            for &w in &spec.w_support {
                let weight = pxz * spec.p_w_given_xz(x, z, w);
                if weight == 0.0 {
                    continue;
                }
                let cens = spec.censor_law(x, z, w);
                let laws: Vec<&TimeLaw> = (1..=k_max).map(|k| spec.event_law(x, z, w, k)).collect();
                for (&c, &pc) in cens.times.iter().zip(&cens.probs) {
                    let all_exceed: f64 = laws.iter().map(|l| l.survival(c)).product();
                    out[0] += weight * pc * all_exceed;
                }
                for k in 1..=k_max {
                    let lk = laws[k - 1];
                    for (&u, &p) in lk.times.iter().zip(&lk.probs) {
                        let mut win = p * cens.survival_left(u);
                        for (i, l) in laws.iter().enumerate() {
                            let i = i + 1;
                            if i < k {
                                win *= l.survival(u);
                            } else if i > k {
                                win *= l.survival_left(u);
                            }
                        }
                        out[k] += weight * win;
                    }
                }
            }
        }
    }
    Ok(out)
}
