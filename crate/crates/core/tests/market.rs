mod common;

use apm_core::market::{
    apmq_allocate, authority_summaries, dominance_trial, equilibrium_cutoffs, sequential_simulation, stable_matching,
    symmetric_economy, t_map, three_authority_economy, two_authority_economy, verify_stability, Authority,
    CutoffMatrix, MultiAuthorityEconomy, Population, Strategy, Violation,
};
use apm_core::mechanisms::PriorityPolicy;
use apm_core::preferences::{DiversityUtility, Preferences, ScoreTransform};
use approx::assert_relative_eq;
use proptest::prelude::*;

#[test]
fn two_authority_stable_admits_a_quarter_of_each_group() {
    let e = two_authority_economy(800).unwrap();
    let s = stable_matching(&e).unwrap();
    for summary in authority_summaries(&e, &s.cutoffs).unwrap() {
        for x in &summary.x {
            assert_relative_eq!(*x, 0.25, epsilon = 1e-9);
        }
    }
    // Per authority: scores 28/64 from the two admitted bands of density 2,
    // diversity 0.25·√.25 + 0.125·√.25.
    assert_relative_eq!(s.welfare, 2.0 * (28.0 / 64.0 + 0.1875), epsilon = 1e-9);
    assert!(s.gap <= 1e-9);
}

#[test]
fn stable_cutoffs_are_a_fixed_point_of_the_t_map() {
    for e in [symmetric_economy(400).unwrap(), three_authority_economy(400).unwrap()] {
        let s = stable_matching(&e).unwrap();
        let image = t_map(&e, &s.cutoffs).unwrap();
        assert!(image.sup_distance(&s.cutoffs) <= 1e-8);
        assert!(verify_stability(&e, &s.cutoffs, 1e-3).unwrap().is_clean());
    }
}

#[test]
fn perturbed_cutoffs_are_flagged() {
    let e = two_authority_economy(800).unwrap();
    let s = stable_matching(&e).unwrap();

    let mut over = s.cutoffs.clone();
    over.set(0, 0, over.get(0, 0) - 0.05);
    let report = verify_stability(&e, &over, 1e-3).unwrap();
    assert!(report.violations.iter().any(|v| matches!(v, Violation::Overfilled { .. })));

    let mut under = s.cutoffs.clone();
    under.set(1, 1, under.get(1, 1) + 0.05);
    let report = verify_stability(&e, &under, 1e-3).unwrap();
    assert!(!report.is_clean());

    let mut skewed = s.cutoffs.clone();
    skewed.set(0, 0, skewed.get(0, 0) + 0.0625);
    skewed.set(1, 0, skewed.get(1, 0) - 0.0625);
    let report = verify_stability(&e, &skewed, 1e-3).unwrap();
    assert!(report.violations.iter().any(|v| matches!(v, Violation::Blocking { .. })));
}

#[test]
fn every_stage_order_reaches_the_stable_cutoffs() {
    let e = three_authority_economy(600).unwrap();
    let stable = stable_matching(&e).unwrap();
    for order in [[0, 1, 2], [2, 1, 0], [1, 2, 0]] {
        let out = sequential_simulation(&e, &order, &[Strategy::OptimalApm, Strategy::OptimalApm, Strategy::OptimalApm])
            .unwrap();
        assert!(out.realized.sup_distance(&stable.cutoffs) <= 1e-6);
        assert!(out.is_ex_post_consistent());
        assert_eq!(out.stages.len(), 3);
    }
}

#[test]
fn equilibrium_under_optimal_apm_is_the_stable_matching() {
    let e = symmetric_economy(400).unwrap();
    let eq = equilibrium_cutoffs(&e, &[Strategy::OptimalApm, Strategy::OptimalApm]).unwrap();
    let stable = stable_matching(&e).unwrap();
    assert!(eq.sup_distance(&stable.cutoffs) <= 1e-8);
}

#[test]
fn optimal_apm_beats_fixed_boosts() {
    let e = symmetric_economy(400).unwrap();
    for boost in [-0.3, -0.1, 0.0, 0.1, 0.3] {
        let t = dominance_trial(
            &e,
            &[1, 0],
            &[Strategy::OptimalApm, Strategy::OptimalApm],
            0,
            Strategy::Priority(PriorityPolicy::boosts(vec![0.0, boost])),
        )
        .unwrap();
        assert!(t.margin >= -1e-12, "boost {boost}: margin {}", t.margin);
        assert_relative_eq!(t.margin, t.apm_utility - t.deviation_utility);
    }
}

#[test]
fn dominance_rejects_malformed_input() {
    let e = symmetric_economy(100).unwrap();
    let apm = [Strategy::OptimalApm, Strategy::OptimalApm];
    assert!(dominance_trial(&e, &[0, 0], &apm, 0, Strategy::OptimalApm).is_err());
    assert!(dominance_trial(&e, &[0, 1], &apm[..1], 0, Strategy::OptimalApm).is_err());
    assert!(dominance_trial(&e, &[0, 1], &apm, 5, Strategy::OptimalApm).is_err());
}

#[test]
fn coordinated_allocation_splits_four_to_one() {
    let e = two_authority_economy(800).unwrap();
    let out = apmq_allocate(&e).unwrap();
    let mut entries: Vec<f64> = out.table.iter().flatten().copied().collect();
    entries.sort_by(f64::total_cmp);
    assert_relative_eq!(entries[0], 0.1, epsilon = 1e-4);
    assert_relative_eq!(entries[1], 0.1, epsilon = 1e-4);
    assert_relative_eq!(entries[2], 0.4, epsilon = 1e-4);
    assert_relative_eq!(entries[3], 0.4, epsilon = 1e-4);
    assert!(out.kkt_residual < 1e-8);
    assert!(out.welfare > out.stable_welfare);
    assert!(out.best_perturbation_gain <= 1e-9);
}

#[test]
fn market_json_roundtrip_preserves_the_matching() {
    let e = three_authority_economy(200).unwrap();
    let text = e.to_json().unwrap();
    let back = MultiAuthorityEconomy::from_json(&text).unwrap();
    assert_eq!(back.authority_count(), 3);
    assert_eq!(back.bins(), 200);
    let a = stable_matching(&e).unwrap();
    let b = stable_matching(&back).unwrap();
    assert!(a.cutoffs.sup_distance(&b.cutoffs) <= 1e-12);
    assert_relative_eq!(a.welfare, b.welfare, epsilon = 1e-12);
}

#[test]
fn market_json_is_validated() {
    let bad_mode = r#"{
        "authorities": [{"name": "a", "capacity": 0.3,
                         "preferences": {"groups": [{"family": "linear", "slope": 0.0}]}}],
        "groups": 1,
        "agents": {"mode": "grid", "rankings": [[0]], "density": [[[1.0, 1.0]]]},
        "common_scores": false
    }"#;
    assert!(MultiAuthorityEconomy::from_json(bad_mode).is_err());
    assert!(MultiAuthorityEconomy::from_json("{").is_err());
    assert!(CutoffMatrix::from_rows(vec![vec![0.1], vec![0.1, 0.2]]).is_err());
}

fn two_sided(cap_a: f64, cap_b: f64, share: f64, slope: f64, bins: usize) -> MultiAuthorityEconomy {
    let cells = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        (0..bins).map(|i| f((i as f64 + 0.5) / bins as f64)).collect()
    };
    let g0: Vec<Vec<f64>> = vec![cells(&|_| share), cells(&|_| 1.0 - share)];
    let g1: Vec<Vec<f64>> = vec![cells(&|s| 0.5 + slope * (s - 0.5)), cells(&|s| 0.5 - slope * (s - 0.5))];
    let prefs = |c: f64| {
        Preferences::new(
            ScoreTransform::Identity,
            vec![DiversityUtility::zero(), DiversityUtility::Power { coef: c, exponent: 0.5 }],
        )
        .unwrap()
    };
    MultiAuthorityEconomy::new(
        vec![
            Authority { name: "a".into(), capacity: cap_a, prefs: prefs(0.2) },
            Authority { name: "b".into(), capacity: cap_b, prefs: prefs(0.1) },
        ],
        2,
        Population::Grid { rankings: vec![vec![0, 1], vec![1, 0]], density: vec![g0, g1] },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stable_matching_passes_its_certificate(
        cap_a in 0.1f64..0.6,
        cap_b in 0.1f64..0.6,
        share in 0.2f64..0.8,
        slope in -0.8f64..0.8,
    ) {
        let e = two_sided(cap_a, cap_b, share, slope, 200);
        let s = stable_matching(&e).unwrap();
        prop_assert!(s.gap <= 1e-6);
        let report = verify_stability(&e, &s.cutoffs, 1e-3).unwrap();
        prop_assert!(report.is_clean(), "{:?}", report.violations);
        for (c, summary) in authority_summaries(&e, &s.cutoffs).unwrap().iter().enumerate() {
            let admitted: f64 = summary.x.iter().sum();
            prop_assert!(summary.unfillable || (admitted - e.authorities()[c].capacity).abs() < 1e-9);
        }
    }

    #[test]
    fn t_map_is_monotone(
        lo in 0.0f64..0.5,
        step in 0.0f64..0.4,
    ) {
        let e = two_sided(0.3, 0.4, 0.5, 0.3, 200);
        let low = CutoffMatrix::filled(2, 2, lo);
        let high = CutoffMatrix::filled(2, 2, lo + step);
        let a = t_map(&e, &low).unwrap();
        let b = t_map(&e, &high).unwrap();
        prop_assert!(a.dominates(&b) || b.dominates(&a));
    }
}
