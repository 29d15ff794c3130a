mod common;

use common::*;
use proptest::prelude::*;
use survfair::sim::*;
use survfair::stats::kendall_tau_b;
use survfair::{FunctionalKind, Query};

const SURV: FunctionalKind = FunctionalKind::Survival;

/// `sum_z P(z | x_z) sum_w P(w | x_w, z) P(T > t | x_y, z, w)` read straight off the tables.
fn enumerate(spec: &SCMSpec, q: Query, t: f64) -> f64 {
    let mut total = 0.0;
    for &z in &spec.z_support {
        let pz = spec.p_xz(q.x_z, z) / spec.p_x(q.x_z);
        for &w in &spec.w_support {
            let pw = spec.p_w_given_xz(q.x_w, z, w);
            let law = spec.event_law(q.x_y, z, w, 1);
            let tail: f64 = law.times.iter().zip(&law.probs).filter(|(u, _)| **u > t).map(|(_, p)| p).sum::<f64>() + law.never;
            total += pz * pw * tail;
        }
    }
    total
}

#[test]
fn no_censoring_possible_gives_events_only() {
    let mut spec = hand_set();
    for law in spec.censor_law.values_mut() {
        *law = TimeLaw::never();
    }
    let c = sample_cohort(&spec, 2000, 1).unwrap();
    assert!(c.deltas().iter().all(|&d| d >= 1));
}

#[test]
fn event_never_happens_gives_censorings_only() {
    let mut spec = hand_set();
    for laws in spec.event_law.values_mut() {
        laws[0] = TimeLaw::never();
    }
    let c = sample_cohort(&spec, 2000, 1).unwrap();
    assert!(c.deltas().iter().all(|&d| d == 0));
}

#[test]
fn independence_coupling_has_zero_latent_kendall_tau() {
    // censoring law shared by all strata, so T and C are marginally independent too
    let s = sample_cohort_with_latent(&severed(), 100_000, 5).unwrap();
    let tau = kendall_tau_b(&s.latent_event, &s.latent_censor);
    assert!(tau.abs() <= 0.02, "tau = {tau}");
}

#[test]
fn empirical_joint_converges_to_tables() {
    let spec = hand_set();
    let n = 100_000;
    let c = sample_cohort(&spec, n, 9).unwrap();
    let mut tv = 0.0;
    for x in 0..2u8 {
        for &z in &spec.z_support {
            for &w in &spec.w_support {
                let p = spec.p_xz(x, z) * spec.p_w_given_xz(x, z, w);
                let count = c.rows().filter(|r| r.x == x && r.z[0] == z && r.w[0] == w).count();
                tv += (count as f64 / n as f64 - p).abs() / 2.0;
            }
        }
    }
    assert!(tv <= 5.0 / (n as f64).sqrt(), "tv = {tv}");
}

#[test]
fn delta_frequencies_match_competing_minimum() {
    for spec in [hand_set(), two_cause()] {
        let n = 100_000;
        let c = sample_cohort(&spec, n, 21).unwrap();
        let exact = observed_delta_probabilities(&spec).unwrap();
        assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (d, &p) in exact.iter().enumerate() {
            let freq = c.deltas().iter().filter(|&&v| v as usize == d).count() as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() <= 3.0 * se, "delta {d}: {freq} vs {p}");
        }
    }
}

#[test]
fn observational_query_is_conditional_mean() {
    let spec = hand_set();
    for t in [3.0, 10.0, 25.0] {
        let po = oracle_potential_outcome(&spec, Query::observational(1), SURV, t).unwrap();
        let mut direct = 0.0;
        for &z in &spec.z_support {
            for &w in &spec.w_support {
                let weight = spec.p_xz(1, z) * spec.p_w_given_xz(1, z, w) / spec.p_x(1);
                direct += weight * conditional_functional(&spec, 1, z, w, SURV, t).unwrap();
            }
        }
        assert!((po - direct).abs() < 1e-12);
    }
}

#[test]
fn severed_pathways_make_value_free_of_mediator_and_population() {
    let spec = severed();
    for x_y in 0..2 {
        let base = oracle_potential_outcome(&spec, Query::new(x_y, 0, 0).unwrap(), SURV, 12.0).unwrap();
        for (x_w, x_z) in [(0, 1), (1, 0), (1, 1)] {
            let v = oracle_potential_outcome(&spec, Query::new(x_y, x_w, x_z).unwrap(), SURV, 12.0).unwrap();
            assert!((v - base).abs() < 1e-12);
        }
    }
}

#[test]
fn oracle_matches_brute_force_enumeration() {
    let spec = hand_set();
    for q in Query::all() {
        for t in [0.0, 1.0, 7.5, 15.0, 29.0, 30.0] {
            let a = oracle_potential_outcome(&spec, q, SURV, t).unwrap();
            assert!((a - enumerate(&spec, q, t)).abs() < 1e-12, "{q} at {t}");
        }
    }
    // frozen from the enumeration above
    let frozen = enumerate(&spec, Query::new(1, 0, 0).unwrap(), 10.0);
    assert!((frozen - 0.570_766_232_893_311_5).abs() < 1e-12, "{frozen:.16}");
}

#[test]
fn oracle_survival_is_monotone_probability() {
    let spec = hand_set();
    let grid: Vec<f64> = (0..=62).map(|i| i as f64 * 0.5).collect();
    for q in Query::all() {
        let v = oracle_po_curve(&spec, q, SURV, &grid).unwrap();
        assert!(v.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }
}

#[test]
fn symmetric_model_has_null_decomposition() {
    let grid = days(29);
    let d = oracle_ground_truth_decomposition(&symmetric(1), &grid, SURV).unwrap();
    for series in [d.total(), d.direct(), d.indirect(), d.spurious()] {
        assert!(series.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn ground_truth_decomposition_identity() {
    let grid = days(29);
    for spec in [hand_set(), severed(), indirect_only(), adversarial()] {
        let d = oracle_ground_truth_decomposition(&spec, &grid, SURV).unwrap();
        assert!(d.identity_residual() <= 1e-12);
    }
}

#[test]
fn direct_effect_at_median_matches_enumeration() {
    let spec = hand_set();
    let grid = days(30);
    let obs = oracle_po_curve(&spec, Query::observational(0), SURV, &grid).unwrap();
    let j = obs.iter().position(|&s| s <= 0.5).unwrap();
    let t = grid[j];
    let d = oracle_ground_truth_decomposition(&spec, &[t], SURV).unwrap();
    let de = enumerate(&spec, Query::new(1, 0, 0).unwrap(), t) - enumerate(&spec, Query::new(0, 0, 0).unwrap(), t);
    assert!((d.direct()[0] - de).abs() < 1e-12);
}

#[test]
fn bundled_example_reproduces_group_imbalance() {
    let spec = icu_analogue();
    assert!((spec.p_x(0) - 0.042).abs() < 1e-12);
    let n = 100_000;
    let c = sample_cohort(&spec, n, 3).unwrap();
    let frac = c.count_group(0) as f64 / n as f64;
    assert!((frac - 0.042).abs() <= 0.005, "group fraction {frac}");
    let event_rate = c.deltas().iter().filter(|&&d| d == 1).count() as f64 / n as f64;
    assert!(event_rate < 0.10, "event rate {event_rate}");
}

#[test]
fn readmission_example_couples_latent_times() {
    let spec = readmission_analogue(0.5).unwrap();
    let s = sample_cohort_with_latent(&spec, 20_000, 4).unwrap();
    assert!(kendall_tau_b(&s.latent_event, &s.latent_censor) > 0.3);
    assert!(readmission_analogue(1.5).is_err());
}

#[test]
fn zero_rows_rejected() {
    assert!(sample_cohort(&hand_set(), 0, 0).is_err());
}

#[test]
fn spec_json_round_trip() {
    let spec = two_cause();
    let back = SCMSpec::from_json_str(&spec.to_json_string().unwrap()).unwrap();
    assert_eq!(back, spec);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sampling_is_deterministic_given_seed(seed in any::<u64>(), n in 1usize..400) {
        let spec = hand_set();
        let a = sample_cohort(&spec, n, seed).unwrap();
        let b = sample_cohort(&spec, n, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
