use apm_core::analytics::{
    boost_curves, curve_magnitude_increasing, estimate, optimal_admissions, synthetic_belief, two_seat_closed_form,
    two_seat_crossing, two_seat_priority_value, two_seat_table, weitzman_closed_forms, weitzman_numeric, CpsFamily,
    EstimationProblem, OmegaDistribution, SearchConfig, SearchGrid, SyntheticConfig, WeitzmanSetting, DEFAULT_STEP,
};
use apm_core::economy::GroupId;
use apm_core::mechanisms::{equivalent_subsidy, optimal_apm, run_apm_greedy};
use approx::assert_relative_eq;
use proptest::prelude::*;

fn test_omega() -> OmegaDistribution {
    OmegaDistribution::uniform(vec![0.47, 0.485, 0.5, 0.515, 0.53]).unwrap()
}

#[test]
fn closed_forms_match_direct_search() {
    let setting = WeitzmanSetting::new(0.125, 1.0, 8.5, 0.5, test_omega()).unwrap();
    let closed = weitzman_closed_forms(&setting);
    let numeric = weitzman_numeric(&setting, SearchGrid { levels: 200, parameters: 400 }).unwrap();
    assert_relative_eq!(closed.v_star, numeric.v_star, max_relative = 1e-8);
    assert_relative_eq!(closed.v_priority, numeric.v_priority, max_relative = 1e-8);
    assert_relative_eq!(closed.v_quota, numeric.v_quota, max_relative = 1e-8);
    assert_relative_eq!(closed.delta, numeric.delta, epsilon = 1e-9);
}

#[test]
fn optimal_apm_attains_state_optima_on_binned_economies() {
    let setting = WeitzmanSetting::new(0.1, 1.25, 7.5, 0.5, test_omega()).unwrap();
    let apm = optimal_apm(&setting.preferences().unwrap()).unwrap();
    for &omega in setting.omega().points() {
        let e = setting.economy(omega, 4_000).unwrap();
        let a = run_apm_greedy(&apm, &e).unwrap();
        let want = optimal_admissions(&setting, omega);
        assert!((a.x()[0] - want).abs() <= setting.kappa() / 4_000.0 + 1e-9, "ω {omega}: {} vs {want}", a.x()[0]);
        assert!(a.x()[0] <= e.group_mass(GroupId(0)) + 1e-12);
    }
}

#[test]
fn boost_curve_ignores_the_state_distribution() {
    let a = WeitzmanSetting::new(0.1, 1.0, 8.5, 0.5, test_omega()).unwrap();
    let b = a.with_omega(OmegaDistribution::uniform(vec![0.45, 0.55]).unwrap()).unwrap();
    let (ca, cb) = (boost_curves(&a, 50), boost_curves(&b, 50));
    assert_eq!(ca.len(), cb.len());
    for (ra, rb) in ca.iter().zip(&cb) {
        assert_eq!(ra.apm_boost, rb.apm_boost);
    }
}

#[test]
fn two_seat_quadrature_matches_closed_forms() {
    let betas = [0.0, 0.2, 1.0 / 3.0 + 0.05, 0.6, 1.0];
    for row in two_seat_table(&betas, 200).unwrap() {
        assert!(row.priority_error <= 1e-4, "β {}: {}", row.closed.beta, row.priority_error);
        assert!(row.quota_error <= 1e-4, "β {}: {}", row.closed.beta, row.quota_error);
    }
    let c = two_seat_crossing(0.49, 0.51, 200, 20).unwrap();
    assert!(c.is_bracketed());
    // V_P = V_Q at 1 + β + 1/(1+β) = 5/3 + β, that is β = 1/2.
    assert_relative_eq!(c.beta, 0.5, epsilon = 1e-3);
}

#[test]
fn two_seat_rejects_bad_beta() {
    assert!(two_seat_closed_form(-0.1).is_err());
    assert!(two_seat_closed_form(f64::NAN).is_err());
}

#[test]
fn equivalent_subsidy_solves_both_clearing_conditions() {
    let (ng, ne, v) = (137_017.0, 55_900.0, 85_000.0);
    for admitted in [33_495.0, 38_834.0] {
        let s = equivalent_subsidy(ng, ne, v, admitted).unwrap();
        assert_relative_eq!(ng * (100.0 - s.cutoff) / 100.0, v - admitted, max_relative = 1e-12);
        assert_relative_eq!(ne * (100.0 + s.alpha - s.cutoff) / 100.0, admitted, max_relative = 1e-12);
    }
    assert!(equivalent_subsidy(ng, ne, v, 60_000.0).is_err());
    assert!(equivalent_subsidy(1_000.0, ne, v, 10.0).is_err());
}

#[test]
fn synthetic_estimates_recover_the_truth_across_seeds() {
    let truth = [-200.0, 2.0];
    for seed in 0..10 {
        let sb = synthetic_belief(&SyntheticConfig { seed, ..SyntheticConfig::default() }).unwrap();
        assert!(sb.residual <= 1e-9, "seed {seed}: residual {}", sb.residual);
        let problem = EstimationProblem::new(
            sb.model,
            sb.reserves,
            CpsFamily::Cps,
            DEFAULT_STEP,
            SearchConfig::default_for(CpsFamily::Cps),
        )
        .unwrap();
        let est = estimate(&problem).unwrap();
        for (p, t) in est.parameters.iter().zip(truth) {
            assert!(((p - t) / t).abs() < 0.05, "seed {seed}: {:?}", est.parameters);
        }
    }
}

#[test]
fn homogeneous_curve_grows_in_magnitude() {
    let sb = synthetic_belief(&SyntheticConfig::default()).unwrap();
    let problem = EstimationProblem::new(
        sb.model,
        sb.reserves,
        CpsFamily::CpsHomogeneous,
        DEFAULT_STEP,
        SearchConfig::default_for(CpsFamily::CpsHomogeneous),
    )
    .unwrap();
    let est = estimate(&problem).unwrap();
    assert!(est.parameters.is_empty());
    assert!(curve_magnitude_increasing(&est.curve));
}

fn setting(kappa: f64, gamma: f64, beta: f64, omega: OmegaDistribution) -> Option<WeitzmanSetting> {
    WeitzmanSetting::new(kappa, gamma, beta, 0.5, omega).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn policy_parameters_depend_on_the_state_mean_only(
        kappa in 0.08f64..0.2,
        gamma in 0.5f64..1.5,
        beta in 5.0f64..10.0,
        mean in 0.45f64..0.55,
        spread in 0.001f64..0.04,
    ) {
        let narrow = OmegaDistribution::uniform(vec![mean]).unwrap();
        let wide = OmegaDistribution::uniform(vec![mean - spread, mean + spread]).unwrap();
        let (a, b) = (setting(kappa, gamma, beta, narrow), setting(kappa, gamma, beta, wide));
        prop_assume!(a.is_some() && b.is_some());
        let (a, b) = (a.unwrap(), b.unwrap());
        let (ca, cb) = (weitzman_closed_forms(&a), weitzman_closed_forms(&b));
        prop_assert!((ca.alpha_star - cb.alpha_star).abs() < 1e-12);
        prop_assert!((ca.quota_star - cb.quota_star).abs() < 1e-12);
        prop_assert!(ca.delta.abs() < 1e-15);
    }

    #[test]
    fn ranking_of_priority_and_quota_flips_at_unit_sensitivity(
        kappa in 0.08f64..0.2,
        gamma in 0.5f64..1.5,
        beta in 3.0f64..12.0,
    ) {
        let s = setting(kappa, gamma, beta, test_omega());
        prop_assume!(s.is_some());
        let s = s.unwrap();
        let c = weitzman_closed_forms(&s);
        let kgb = kappa * gamma * beta;
        prop_assert_eq!(c.delta > 0.0, kgb < 1.0);
        prop_assert!((c.delta - (c.v_priority - c.v_quota)).abs() < 1e-12);
        prop_assert!(c.delta_star >= 0.0);
        prop_assert!(c.v_star + 1e-12 >= c.v_priority.max(c.v_quota));
        prop_assert!((c.delta_star - (c.v_star - c.v_priority).min(c.v_star - c.v_quota)).abs() < 1e-12);
    }

    #[test]
    fn two_seat_boost_is_the_best_priority(beta in 0.0f64..2.0, alpha in -1.0f64..1.0) {
        let c = two_seat_closed_form(beta).unwrap();
        prop_assert!(two_seat_priority_value(beta, alpha) <= c.v_priority + 1e-12);
        prop_assert!((two_seat_priority_value(beta, c.alpha_star) - c.v_priority).abs() < 1e-12);
    }
}
