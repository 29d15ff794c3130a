mod common;

use common::*;
use proptest::prelude::*;
use survfair::nuisance::*;
use survfair::sim::{sample_cohort, SCMSpec};
use survfair::survival::{kaplan_meier, nelson_aalen};
use survfair::Cohort;

fn stratum_rows(c: &Cohort, x: u8, z: f64, w: f64) -> Vec<usize> {
    (0..c.len()).filter(|&i| c.x()[i] == x && c.row(i).z[0] == z && c.row(i).w[0] == w).collect()
}

fn true_survival(spec: &SCMSpec, x: u8, z: f64, w: f64, t: f64) -> f64 {
    spec.event_law(x, z, w, 1).survival(t)
}

#[test]
fn homogeneous_outcome_gives_marginal_km() {
    let n = 400;
    let x: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let z: Vec<f64> = (0..n).map(|i| ((i / 2) % 2) as f64).collect();
    let w: Vec<f64> = (0..n).map(|i| ((i / 4) % 2) as f64).collect();
    // every stratum sees the same multiset of times
    let m: Vec<f64> = (0..n).map(|i| 1.0 + (i / 8) as f64).collect();
    let d = vec![1u8; n];
    let c = Cohort::from_scalar_columns(x, z, w, m.clone(), d.clone(), 1).unwrap();
    let model = fit_conditional_survival(&c, Target::Event, LearnerKind::Stratified, 0).unwrap();
    let km = kaplan_meier(&m, &d).unwrap();
    for (xv, zv, wv) in [(0u8, 0.0, 0.0), (1, 1.0, 0.0), (0, 1.0, 1.0), (1, 0.0, 1.0)] {
        let p = model.predict(xv, &[zv], &[wv]).unwrap();
        for t in [0.0, 5.5, 20.0, 49.0, 51.0] {
            assert!((p.survival.at(t) - km.at(t)).abs() < 1e-12);
        }
    }
}

#[test]
fn stratified_prediction_is_subset_km() {
    let c = sample_cohort(&hand_set(), 3000, 2).unwrap();
    let model = fit_conditional_survival(&c, Target::Event, LearnerKind::Stratified, 0).unwrap();
    for (x, z, w) in [(0u8, 0.0, 1.0), (1, 1.0, 1.0)] {
        let sub = c.subset(&stratum_rows(&c, x, z, w));
        let km = kaplan_meier(sub.times(), sub.deltas()).unwrap();
        let p = model.predict(x, &[z], &[w]).unwrap();
        for t in days(30) {
            assert!((p.survival.at(t) - km.at(t)).abs() < 1e-14);
        }
    }
}

#[test]
fn learners_recover_stratum_survival() {
    let spec = hand_set();
    let c = sample_cohort(&spec, 20_000, 8).unwrap();
    let tree = LearnerKind::LogrankTreeEnsemble(TreeParams { n_trees: 30, min_leaf: 50, max_depth: 4 });
    for learner in [LearnerKind::Stratified, tree] {
        let model = fit_conditional_survival(&c, Target::Event, learner, 3).unwrap();
        for x in 0..2u8 {
            for z in [0.0, 1.0] {
                for w in [0.0, 1.0] {
                    let p = model.predict(x, &[z], &[w]).unwrap();
                    let err = days(29).iter().map(|&t| (p.survival.at(t) - true_survival(&spec, x, z, w, t)).abs()).fold(0.0, f64::max);
                    assert!(err <= 0.05, "{learner:?} stratum {x}|{z}|{w}: {err}");
                }
            }
        }
    }
}

#[test]
fn censoring_hazard_increments() {
    // four rows at risk when the single censoring happens at t = 2
    let c = Cohort::from_scalar_columns(vec![0, 0, 0, 0], vec![0.0; 4], vec![0.0; 4], vec![1.5, 2.0, 3.0, 4.0], vec![1, 0, 1, 1], 1).unwrap();
    let c = Cohort::from_scalar_columns(
        [c.x(), &[1, 1]].concat(),
        vec![0.0; 6],
        vec![0.0; 6],
        [c.times(), &[1.0, 2.0]].concat(),
        [c.deltas(), &[1, 1]].concat(),
        1,
    )
    .unwrap();
    let g = fit_conditional_survival(&c, Target::Censoring, LearnerKind::Stratified, 0).unwrap();
    let inc = g.predict_censoring_hazard_increments(0, &[0.0], &[0.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    // the event at 1.5 leaves three at risk
    assert!((inc[1].1 - 1.0 / 3.0).abs() < 1e-15);
    let untied = Cohort::from_scalar_columns(vec![0, 0, 0, 0, 1], vec![0.0; 5], vec![0.0; 5], vec![1.0, 2.0, 3.0, 4.0, 1.0], vec![0, 1, 1, 1, 1], 1).unwrap();
    let g = fit_conditional_survival(&untied, Target::Censoring, LearnerKind::Stratified, 0).unwrap();
    let inc = g.predict_censoring_hazard_increments(0, &[0.0], &[0.0], &[1.0, 2.0]).unwrap();
    assert!((inc[0].1 - 0.25).abs() < 1e-15);
    let none = g.predict_censoring_hazard_increments(1, &[0.0], &[0.0], &[1.0, 2.0]).unwrap();
    assert!(none.iter().all(|(_, d)| *d == 0.0));
    let event_model = fit_conditional_survival(&untied, Target::Event, LearnerKind::Stratified, 0).unwrap();
    assert!(event_model.predict_censoring_hazard_increments(0, &[0.0], &[0.0], &[1.0]).is_err());
}

#[test]
fn censoring_increments_resum_to_nelson_aalen() {
    let c = sample_cohort(&severed(), 4000, 6).unwrap();
    let g = fit_conditional_survival(&c, Target::Censoring, LearnerKind::Stratified, 0).unwrap();
    let rows = stratum_rows(&c, 1, 1.0, 0.0);
    let sub = c.subset(&rows);
    let grid: Vec<f64> = days(30);
    let inc = g.predict_censoring_hazard_increments(1, &[1.0], &[0.0], &grid).unwrap();
    // daily times tie events with censorings; the censoring risk set excludes tied events
    let flipped: Vec<u8> = sub.deltas().iter().map(|&d| u8::from(d == 0)).collect();
    let mut acc = 0.0;
    for (k, &(t, d)) in inc.iter().enumerate() {
        acc += d;
        let at_risk = sub.times().iter().zip(sub.deltas()).filter(|(m, dd)| **m > t || (**m == t && **dd == 0)).count() as f64;
        let censored = sub.times().iter().zip(&flipped).filter(|(m, f)| **m == t && **f == 1).count() as f64;
        let expected = if at_risk > 0.0 { censored / at_risk } else { 0.0 };
        assert!((d - expected).abs() < 1e-12, "step {k}");
    }
    assert!(acc > 0.0);
    let untied_times: Vec<f64> = (0..200).map(|i| i as f64 * 0.1 + 0.05).collect();
    let untied_d: Vec<u8> = (0..200).map(|i| u8::from(i % 3 == 0)).collect();
    let c = Cohort::from_scalar_columns(vec![1; 200].into_iter().chain([0]).collect(), vec![0.0; 201], vec![0.0; 201], untied_times.iter().copied().chain([1.0]).collect(), untied_d.iter().copied().chain([1]).collect(), 1).unwrap();
    let g = fit_conditional_survival(&c, Target::Censoring, LearnerKind::Stratified, 0).unwrap();
    let inc = g.predict_censoring_hazard_increments(1, &[0.0], &[0.0], &untied_times).unwrap();
    let na = nelson_aalen(&untied_times, &untied_d.iter().map(|d| 1 - d).collect::<Vec<_>>()).unwrap();
    let mut acc = 0.0;
    for &(t, d) in &inc {
        acc += d;
        assert!((acc - na.at(t)).abs() < 1e-12);
    }
}

#[test]
fn balanced_independent_assignment_gives_half() {
    let spec = SCMSpec::from_fn(
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        1,
        |_, z| 0.5 * if z == 1.0 { 0.4 } else { 0.6 },
        |_, _, w| if w == 1.0 { 0.3 } else { 0.7 },
        |_, _, _, _| geometric(0.05, 20),
        |_, _, _| geometric(0.02, 20),
        Default::default(),
    )
    .unwrap();
    let n = 20_000;
    let c = sample_cohort(&spec, n, 13).unwrap();
    for cond in [Conditioning::Marginal, Conditioning::Z, Conditioning::ZW] {
        let p = fit_propensity(&c, cond, PropensityLearner::FrequencyTable, 0.01).unwrap();
        for (z, w) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            let cell = match cond {
                Conditioning::Marginal => n,
                Conditioning::Z => c.rows().filter(|r| r.z[0] == z).count(),
                Conditioning::ZW => c.rows().filter(|r| r.z[0] == z && r.w[0] == w).count(),
            };
            let se = (0.25 / cell as f64).sqrt();
            assert!((p.predict(1, &[z], &[w]).unwrap() - 0.5).abs() <= 2.0 * se);
        }
    }
}

#[test]
fn frequency_table_is_exact_stratum_fraction_and_complement() {
    let c = sample_cohort(&hand_set(), 5000, 14).unwrap();
    let p = fit_propensity(&c, Conditioning::ZW, PropensityLearner::FrequencyTable, 0.01).unwrap();
    let rows = stratum_rows(&c, 1, 1.0, 0.0);
    let total = c.rows().filter(|r| r.z[0] == 1.0 && r.w[0] == 0.0).count();
    assert_eq!(p.predict_raw(&[1.0], &[0.0]).unwrap(), rows.len() as f64 / total as f64);
    for (z, w) in [(0.0, 0.0), (1.0, 1.0)] {
        assert_eq!(p.predict(0, &[z], &[w]).unwrap() + p.predict(1, &[z], &[w]).unwrap(), 1.0);
    }
    let logit = fit_propensity(&c, Conditioning::ZW, PropensityLearner::LogisticIrls, 0.01).unwrap();
    for (z, w) in [(0.0, 0.0), (1.0, 1.0)] {
        assert!((logit.predict(0, &[z], &[w]).unwrap() + logit.predict(1, &[z], &[w]).unwrap() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn marginal_propensity_reproduces_minority_fraction() {
    let c = sample_cohort(&survfair::sim::icu_analogue(), 100_000, 17).unwrap();
    let p = fit_propensity(&c, Conditioning::Marginal, PropensityLearner::FrequencyTable, 0.01).unwrap();
    assert!((p.predict(0, &[0.0], &[0.0]).unwrap() - 0.042).abs() <= 0.005);
}

#[test]
fn clipping_bounds_propensities() {
    let c = sample_cohort(&survfair::sim::icu_analogue(), 5000, 1).unwrap();
    let p = fit_propensity(&c, Conditioning::ZW, PropensityLearner::FrequencyTable, 0.1).unwrap();
    assert!(p.predict(0, &[0.0], &[1.0]).unwrap() >= 0.1 - 1e-12);
    assert!(p.report().clip_rate > 0.0);
    assert!(fit_propensity(&c, Conditioning::Z, PropensityLearner::FrequencyTable, 0.5).is_err());
}

#[test]
fn tree_leaves_respect_min_leaf_and_seed() {
    let c = sample_cohort(&hand_set(), 3000, 5).unwrap();
    let params = TreeParams { n_trees: 10, min_leaf: 40, max_depth: 6 };
    let a = fit_conditional_survival(&c, Target::Event, LearnerKind::LogrankTreeEnsemble(params), 11).unwrap();
    assert!(a.min_leaf_size().unwrap() >= 40);
    let b = fit_conditional_survival(&c, Target::Event, LearnerKind::LogrankTreeEnsemble(params), 11).unwrap();
    for (x, z, w) in [(0u8, 0.0, 0.0), (1, 1.0, 1.0)] {
        assert_eq!(a.predict(x, &[z], &[w]).unwrap(), b.predict(x, &[z], &[w]).unwrap());
    }
}

#[test]
fn stratified_fit_ignores_row_order() {
    let c = sample_cohort(&hand_set(), 2000, 7).unwrap();
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.reverse();
    idx.rotate_left(311);
    let permuted = c.subset(&idx);
    let a = fit_conditional_survival(&c, Target::Event, LearnerKind::Stratified, 0).unwrap();
    let b = fit_conditional_survival(&permuted, Target::Event, LearnerKind::Stratified, 0).unwrap();
    for x in 0..2u8 {
        for (z, w) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            assert_eq!(a.predict(x, &[z], &[w]).unwrap(), b.predict(x, &[z], &[w]).unwrap());
        }
    }
}

#[test]
fn unseen_stratum_backs_off() {
    let c = sample_cohort(&hand_set(), 2000, 7).unwrap();
    let model = fit_conditional_survival(&c, Target::Event, LearnerKind::Stratified, 0).unwrap();
    let p = model.predict(1, &[7.0], &[3.0]).unwrap();
    assert_ne!(p.fallback, Fallback::None);
}

#[test]
fn competing_target_carries_incidences() {
    let c = sample_cohort(&two_cause(), 4000, 3).unwrap();
    let model = fit_conditional_survival(&c, Target::Competing, LearnerKind::Stratified, 0).unwrap();
    let p = model.predict(1, &[1.0], &[1.0]).unwrap();
    for t in days(30) {
        assert!((p.cif_at(1, t) + p.cif_at(2, t) + p.survival.at(t) - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn predictions_are_monotone_probabilities(x in 0u8..2, z in -2.0f64..3.0, w in -2.0f64..3.0, learner in 0usize..3) {
        let c = sample_cohort(&hand_set(), 600, 1).unwrap();
        let kind = [
            LearnerKind::Stratified,
            LearnerKind::LogrankTreeEnsemble(TreeParams { n_trees: 5, min_leaf: 20, max_depth: 3 }),
            LearnerKind::ConstantHazard { rate: None },
        ][learner];
        let model = fit_conditional_survival(&c, Target::Event, kind, 0).unwrap();
        // continuous inputs are only meaningful to the tree and constant learners
        let (z, w) = if learner == 0 { (z.round().clamp(0.0, 1.0), w.round().clamp(0.0, 1.0)) } else { (z, w) };
        let p = model.predict(x, &[z], &[w]).unwrap();
        let v = p.survival.values();
        prop_assert!(v.iter().all(|s| (0.0..=1.0).contains(s)));
        prop_assert!(v.windows(2).all(|s| s[1] <= s[0]));
    }
}
