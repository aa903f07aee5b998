mod common;

use apm_core::economy::{expected_utility, Agent, Belief, ContinuumEconomy, DiscreteEconomy, Economy, GroupId, Mechanism};
use apm_core::mechanisms::{
    brute_force_optimum, brute_force_subsets, discrete_fixed_points, discrete_utility, no_uncertainty_equivalents,
    optimal_apm, optimal_discrete_apm, priority_from_cutoffs, rationalizing_priority, rationalizing_quota,
    run_apm_discrete, run_apm_greedy, run_priority, run_priority_discrete, run_quota, run_quota_discrete,
    AdaptivePriority, PolicySpec, PriorityMap, PriorityPolicy, PriorityRule, QuotaPolicy, Refusal, Round,
};
use apm_core::preferences::{DiversityUtility, Preferences, ScoreTransform};
use apm_core::Error;
use approx::assert_relative_eq;
use proptest::prelude::*;

fn uniform(masses: &[f64], capacity: f64) -> ContinuumEconomy {
    ContinuumEconomy::uniform(masses, 1_000, capacity).unwrap()
}

#[test]
fn merit_priority_admits_the_top_scores() {
    let e = uniform(&[0.5, 0.5], 0.4);
    let a = run_priority(&PriorityPolicy::merit(2), &e).unwrap();
    assert_relative_eq!(a.cutoffs()[0], 0.6, epsilon = 1e-9);
    assert_relative_eq!(a.cutoffs()[1], 0.6, epsilon = 1e-9);
    assert_relative_eq!(a.total(), 0.4, epsilon = 1e-12);
}

#[test]
fn boost_shifts_cutoffs_by_its_size() {
    let e = uniform(&[0.5, 0.5], 0.4);
    let a = run_priority(&PriorityPolicy::boosts(vec![0.0, 0.1]), &e).unwrap();
    assert_relative_eq!(a.cutoffs()[0] - a.cutoffs()[1], 0.1, epsilon = 1e-9);
    assert_relative_eq!(a.total(), 0.4, epsilon = 1e-12);
}

#[test]
fn zero_quota_matches_merit_priority() {
    let e = uniform(&[0.7, 0.3], 0.45);
    let q = run_quota(&QuotaPolicy::reserves_first(vec![0.0, 0.0], 0.45).unwrap(), &e).unwrap();
    let p = run_priority(&PriorityPolicy::merit(2), &e).unwrap();
    for m in 0..2 {
        assert_relative_eq!(q.x()[m], p.x()[m], epsilon = 1e-12);
    }
}

#[test]
fn binding_reserve_lowers_the_reserved_cutoff() {
    let e = uniform(&[0.8, 0.2], 0.5);
    let a = run_quota(&QuotaPolicy::reserves_first(vec![0.0, 0.15], 0.5).unwrap(), &e).unwrap();
    assert!(a.x()[1] >= 0.15 - 1e-12);
    assert!(a.cutoffs()[1] < a.cutoffs()[0]);
}

#[test]
fn quota_rejects_bad_precedence_and_excess_reserves() {
    assert!(QuotaPolicy::reserves_first(vec![0.3, 0.3], 0.5).is_err());
    assert!(QuotaPolicy::new(vec![0.1, 0.1], vec![Round::Group(0), Round::Group(0), Round::Residual], 0.5).is_err());
    assert!(QuotaPolicy::new(vec![-0.1, 0.1], vec![Round::Group(0), Round::Group(1), Round::Residual], 0.5).is_err());
}

#[test]
fn priority_from_quota_cutoffs_reproduces_the_quota() {
    let e = uniform(&[0.6, 0.4], 0.5);
    let quota = run_quota(&QuotaPolicy::reserves_first(vec![0.0, 0.25], 0.5).unwrap(), &e).unwrap();
    let p = run_priority(&priority_from_cutoffs(quota.cutoffs()), &e).unwrap();
    for m in 0..2 {
        assert_relative_eq!(p.x()[m], quota.x()[m], epsilon = 1e-9);
    }
}

#[test]
fn known_state_equivalents_reproduce_the_optimum() {
    let prefs = Preferences::new(
        ScoreTransform::Identity,
        vec![DiversityUtility::LinearQuadratic { gamma: 0.5, beta: 1.0 }, DiversityUtility::zero()],
    )
    .unwrap();
    let e = uniform(&[0.3, 0.7], 0.4);
    let eq = no_uncertainty_equivalents(&e, &prefs).unwrap();
    let p = run_priority(&eq.priority, &e).unwrap();
    let q = run_quota(&eq.quota, &e).unwrap();
    for m in 0..2 {
        assert_relative_eq!(p.x()[m], eq.optimum.x()[m], epsilon = 1e-8);
        assert_relative_eq!(q.x()[m], eq.optimum.x()[m], epsilon = 1e-8);
    }
}

#[test]
fn linear_quadratic_apm_matches_the_first_order_condition() {
    // u_0 = γ(x - βx²/2) on a uniform economy: cutoffs satisfy
    // c_1 = c_0 + γ(1 - β x_0) with x_m = mass_m (1 - c_m).
    let (gamma, beta) = (0.4, 2.0);
    let prefs = Preferences::new(
        ScoreTransform::Identity,
        vec![DiversityUtility::LinearQuadratic { gamma, beta }, DiversityUtility::zero()],
    )
    .unwrap();
    let e = uniform(&[0.5, 0.5], 0.4);
    let a = run_apm_greedy(&optimal_apm(&prefs).unwrap(), &e).unwrap();
    let x0 = a.x()[0];
    assert_relative_eq!(a.cutoffs()[1], a.cutoffs()[0] + gamma * (1.0 - beta * x0), epsilon = 1e-6);
}

#[test]
fn rationalizers_refuse_the_wrong_preferences() {
    let concave = Preferences::new(
        ScoreTransform::Identity,
        vec![DiversityUtility::LinearQuadratic { gamma: 0.5, beta: 1.0 }, DiversityUtility::zero()],
    )
    .unwrap();
    assert_eq!(rationalizing_priority(&concave).unwrap_err(), Refusal::NotLinear { group: 0 });
    assert_eq!(rationalizing_quota(&concave, 0.5).unwrap_err(), Refusal::NotExtreme { group: 0 });
    let weak = Preferences::new(
        ScoreTransform::Identity,
        vec![DiversityUtility::ExtremeTarget { target: 0.1, slope: 0.5 }, DiversityUtility::zero()],
    )
    .unwrap();
    assert!(matches!(rationalizing_quota(&weak, 0.5), Err(Refusal::WeakTarget { .. })));
    let greedy = Preferences::new(
        ScoreTransform::Identity,
        vec![
            DiversityUtility::ExtremeTarget { target: 0.4, slope: 10.0 },
            DiversityUtility::ExtremeTarget { target: 0.4, slope: 10.0 },
        ],
    )
    .unwrap();
    assert!(matches!(rationalizing_quota(&greedy, 0.5), Err(Refusal::TargetsExceedCapacity { .. })));
}

#[test]
fn non_concave_utilities_are_rejected() {
    let convex = DiversityUtility::PiecewiseLinear {
        knots: vec![0.0, 0.5, 1.0],
        values: vec![0.0, 0.1, 1.0],
    };
    let err = Preferences::new(ScoreTransform::Identity, vec![convex, DiversityUtility::zero()]).unwrap_err();
    assert!(matches!(err, Error::NotConcave { group: 0 }));
}

#[test]
fn non_monotone_policy_is_refused_by_greedy_but_has_fixed_points() {
    let apm = AdaptivePriority::new(
        vec![
            PriorityMap::Custom(apm_core::mechanisms::Func2::new(|y, s| s + 0.5 * y)),
            PriorityMap::Custom(apm_core::mechanisms::Func2::new(|_, s| s)),
        ],
        4.0,
    )
    .unwrap();
    assert!(!apm.is_monotone());
    let e = uniform(&[0.5, 0.5], 0.4);
    assert!(matches!(run_apm_greedy(&apm, &e), Err(Error::NotMonotone(_))));
    let d = DiscreteEconomy::new(
        2,
        vec![Agent::new(0.9, 0), Agent::new(0.8, 1), Agent::new(0.7, 0), Agent::new(0.6, 1)],
        2,
    )
    .unwrap();
    assert!(!discrete_fixed_points(&apm, &d).unwrap().is_empty());
}

#[test]
fn brute_force_routes_agree() {
    let mut rng = common::rng(11);
    for _ in 0..30 {
        let e = common::random_discrete(&mut rng, 2, 10);
        let us = (0..2).map(|_| common::random_concave_counts(&mut rng, e.len())).collect();
        let prefs = Preferences::new(ScoreTransform::Identity, us).unwrap();
        let (_, a) = brute_force_optimum(&e, &prefs).unwrap();
        let (_, b) = brute_force_subsets(&e, &prefs).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }
}

#[test]
fn policy_spec_builds_every_kind() {
    let prefs = Preferences::new(
        ScoreTransform::Identity,
        vec![DiversityUtility::LinearQuadratic { gamma: 0.5, beta: 1.0 }, DiversityUtility::zero()],
    )
    .unwrap();
    let specs: Vec<PolicySpec> = serde_json::from_str(
        r#"[
            {"kind": "priority", "rule": {"family": "boosts", "boosts": [0.1, 0.0]}},
            {"kind": "quota", "reserves": [0.1, 0.0]},
            {"kind": "optimal-apm"}
        ]"#,
    )
    .unwrap();
    let continuum = Economy::Continuum(uniform(&[0.5, 0.5], 0.4));
    let discrete = Economy::Discrete(
        DiscreteEconomy::new(2, vec![Agent::new(0.9, 0), Agent::new(0.8, 1), Agent::new(0.3, 0)], 2).unwrap(),
    );
    for spec in &specs {
        let policy = spec.build(2, 0.4, Some(&prefs)).unwrap();
        assert_relative_eq!(policy.allocate(&continuum).unwrap().x().iter().sum::<f64>(), 0.4, epsilon = 1e-9);
    }
    let discrete_specs = [
        specs[0].clone(),
        PolicySpec::Quota { reserves: vec![0.0, 1.0], precedence: None },
        PolicySpec::OptimalApm,
    ];
    for spec in &discrete_specs {
        let policy = spec.build(2, 2.0, Some(&prefs)).unwrap();
        assert_eq!(policy.allocate(&discrete).unwrap().x().iter().sum::<f64>(), 2.0);
    }
    assert!(PolicySpec::OptimalApm.build(2, 0.4, None).is_err());
    assert!(PolicySpec::Quota { reserves: vec![0.1], precedence: None }.build(2, 0.4, None).is_err());
}

#[test]
fn expected_utility_weights_states() {
    let prefs = Preferences::merit(2);
    let a = Economy::Continuum(uniform(&[0.5, 0.5], 0.5));
    let b = Economy::Continuum(uniform(&[0.5, 0.5], 0.5).with_capacity(0.25).unwrap());
    assert!(Belief::new(vec![(a.clone(), 0.25), (b.clone(), 0.75)]).is_err());
    let belief = Belief::heterogeneous(vec![(a, 0.25), (b, 0.75)]).unwrap();
    let v = expected_utility(&PriorityPolicy::merit(2), &belief, &prefs).unwrap();
    // Top half of a unit-mass uniform: ∫_{1/2}^1 s ds = 3/8; top quarter: 7/32.
    assert_relative_eq!(v, 0.25 * 0.375 + 0.75 * 7.0 / 32.0, epsilon = 1e-6);
}

fn arb_state() -> impl Strategy<Value = (Vec<(f64, usize)>, usize)> {
    (3usize..=9).prop_flat_map(|n| {
        (
            proptest::collection::vec((0.0f64..1.0, 0usize..2), n),
            1usize..n,
        )
    })
}

fn discrete(agents: &[(f64, usize)], capacity: usize) -> Option<DiscreteEconomy> {
    let agents = agents.iter().map(|&(s, g)| Agent::new(s, g)).collect();
    DiscreteEconomy::new(2, agents, capacity).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn discrete_apm_is_first_best(
        (agents, capacity) in arb_state(),
        slopes in proptest::collection::vec(-1.0f64..1.0, 18),
    ) {
        let Some(e) = discrete(&agents, capacity) else { return Ok(()) };
        let n = e.len();
        let mut us = Vec::new();
        for m in 0..2 {
            let mut s = slopes[m * 9..m * 9 + n].to_vec();
            s.sort_by(|a, b| b.total_cmp(a));
            let mut values = vec![0.0];
            for v in s {
                values.push(values.last().unwrap() + v);
            }
            us.push(DiversityUtility::PiecewiseLinear { knots: (0..=n).map(|k| k as f64).collect(), values });
        }
        let prefs = Preferences::new(ScoreTransform::Identity, us).unwrap();
        let greedy = run_apm_discrete(&optimal_discrete_apm(&prefs).unwrap(), &e).unwrap();
        let (_, best) = brute_force_optimum(&e, &prefs).unwrap();
        let u = discrete_utility(&e, &greedy, &prefs).unwrap();
        prop_assert!(u >= best - 1e-12);
    }

    #[test]
    fn mechanisms_fill_capacity_with_cutoff_structure(
        (agents, capacity) in arb_state(),
        boost in -0.5f64..0.5,
        reserve in 0usize..3,
    ) {
        let Some(e) = discrete(&agents, capacity) else { return Ok(()) };
        let p = run_priority_discrete(&PriorityPolicy::boosts(vec![0.0, boost]), &e).unwrap();
        let r = reserve.min(capacity);
        let q = run_quota_discrete(&QuotaPolicy::reserves_first(vec![0.0, r as f64], capacity as f64).unwrap(), &e).unwrap();
        for a in [&p, &q] {
            prop_assert_eq!(a.counts().iter().sum::<usize>(), capacity);
            prop_assert!(a.has_cutoff_structure(&e));
        }
        let admitted1 = q.counts()[1];
        prop_assert!(admitted1 >= r.min(e.group_size(GroupId(1))));
    }

    #[test]
    fn continuum_priority_fills_capacity(
        m0 in 0.2f64..1.0,
        m1 in 0.2f64..1.0,
        share in 0.1f64..0.9,
        boost in -0.5f64..0.5,
    ) {
        let q = share * (m0 + m1);
        let e = ContinuumEconomy::uniform(&[m0, m1], 400, q).unwrap();
        let a = run_priority(&PriorityPolicy::boosts(vec![0.0, boost]), &e).unwrap();
        prop_assert!((a.total() - q).abs() < 1e-9);
        a.verify(&e).unwrap();
    }

    #[test]
    fn transformed_priority_orders_like_its_transform(
        shift in 0.0f64..0.3,
    ) {
        let e = ContinuumEconomy::uniform(&[0.5, 0.5], 400, 0.4).unwrap();
        let plain = run_priority(&PriorityPolicy::boosts(vec![shift, 0.0]), &e).unwrap();
        let rule = PriorityRule::Transformed { h: ScoreTransform::Identity, boosts: vec![shift, 0.0] };
        let same = run_priority(&PriorityPolicy::new(rule, 2).unwrap(), &e).unwrap();
        prop_assert!((plain.x()[0] - same.x()[0]).abs() < 1e-9);
    }
}
