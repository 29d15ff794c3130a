use proptest::prelude::*;
use survfair::survival::*;

fn cohort_strategy(max_causes: u8) -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    prop::collection::vec((1u32..60, 0u8..=max_causes), 1..120).prop_map(|rows| {
        let times = rows.iter().map(|r| f64::from(r.0) * 0.5).collect();
        let deltas = rows.iter().map(|r| r.1).collect();
        (times, deltas)
    })
}

#[test]
fn rmst_of_uncensored_km_by_step_integration() {
    let s = kaplan_meier::<f64>(&[1.0, 2.0, 3.0], &[1, 1, 1]).unwrap();
    // 1 * 1 + 1 * (2/3) + 1 * (1/3)
    assert!((s.rmst(3.0).unwrap() - 2.0).abs() < 1e-14);
    let flat = StepCurve::<f64>::constant(CurveKind::Survival, 1.0).unwrap();
    assert_eq!(flat.rmst(4.0).unwrap(), 4.0);
    let drop = StepCurve::new(CurveKind::Survival, 1.0, vec![2.0], vec![0.0]).unwrap();
    assert_eq!(drop.rmst(5.0).unwrap(), 2.0);
}

#[test]
fn km_and_exp_nelson_aalen_agree_on_large_risk_sets() {
    let n = 400;
    let times: Vec<f64> = (0..n).map(|i| 1.0 + (i * 37 % 200) as f64 * 0.25).collect();
    let events: Vec<u8> = (0..n).map(|i| u8::from(i % 3 != 0)).collect();
    let km = kaplan_meier(&times, &events).unwrap();
    let na = nelson_aalen(&times, &events).unwrap();
    for &t in km.breakpoints() {
        assert!((km.at(t) - (-na.at(t)).exp()).abs() <= 0.05);
    }
}

#[test]
fn single_precision_tracks_double() {
    let t64 = [0.5f64, 1.0, 1.0, 2.5, 3.0, 4.5, 6.0];
    let d = [1u8, 1, 0, 1, 0, 1, 1];
    let t32: Vec<f32> = t64.iter().map(|&t| t as f32).collect();
    let a = kaplan_meier(&t64, &d).unwrap();
    let b = kaplan_meier(&t32, &d).unwrap();
    for (&t, &v) in a.breakpoints().iter().zip(a.values()) {
        assert!((f64::from(b.at(t as f32)) - v).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn km_is_monotone_probability((times, deltas) in cohort_strategy(1)) {
        let s = kaplan_meier(&times, &deltas).unwrap();
        prop_assert!(s.values().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(s.values().windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn nelson_aalen_is_nondecreasing((times, deltas) in cohort_strategy(1)) {
        let h = nelson_aalen(&times, &deltas).unwrap();
        prop_assert!(h.values().iter().all(|v| *v >= 0.0));
        prop_assert!(h.values().windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn incidences_and_all_cause_survival_sum_to_one((times, deltas) in cohort_strategy(3)) {
        let table = RiskTable::new(&times, &deltas, 3).unwrap();
        let s_all = table.all_cause_survival().unwrap();
        let cifs: Vec<_> = (1..=3).map(|k| table.cif(k).unwrap()).collect();
        for &t in &table.times {
            let total: f64 = cifs.iter().map(|c| c.at(t)).sum::<f64>() + s_all.at(t);
            prop_assert!((total - 1.0).abs() <= 1e-12, "sum {} at {}", total, t);
        }
    }

    #[test]
    fn evaluation_is_right_continuous_and_restrict_preserves_grid((times, deltas) in cohort_strategy(1)) {
        let s = kaplan_meier(&times, &deltas).unwrap();
        for (&t, &v) in s.breakpoints().iter().zip(s.values()) {
            prop_assert_eq!(s.at(t), v);
        }
        let mut grid = times.clone();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let r = s.restrict(&grid).unwrap();
        for &t in &grid {
            prop_assert_eq!(r.at(t), s.at(t));
        }
    }

    #[test]
    fn censoring_survival_is_km_of_flipped_indicator_without_ties(n in 2usize..80, seed in any::<u64>()) {
        // distinct times, so the tie convention plays no role
        let times: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let deltas: Vec<u8> = (0..n).map(|i| u8::from((seed >> (i % 64)) & 1 == 1)).collect();
        let g = RiskTable::new(&times, &deltas, 1).unwrap().censoring_survival().unwrap();
        let flipped: Vec<u8> = deltas.iter().map(|d| 1 - d).collect();
        let km = kaplan_meier(&times, &flipped).unwrap();
        for &t in &times {
            prop_assert!((g.at(t) - km.at(t)).abs() < 1e-14);
        }
    }
}
