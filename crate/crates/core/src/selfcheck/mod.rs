//! The acceptance criteria as runnable checks, shared by the acceptance
//! test target and the `apm selftest` command.

pub mod sample;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::analytics::{
    curve_magnitude_increasing, estimate, precedence_check, synthetic_belief, two_seat_crossing, two_seat_table,
    weitzman_closed_forms, weitzman_oracle, CpsFamily, EstimationProblem, OmegaDistribution, SearchConfig,
    SearchGrid, SyntheticConfig, WeitzmanSetting, DEFAULT_STEP,
};
use crate::market::{
    apmq_allocate, authority_summaries, dominance_trial, sequential_simulation, stable_matching,
    symmetric_economy, three_authority_economy, two_authority_economy, verify_stability, MultiAuthorityEconomy,
    Strategy,
};
use crate::mechanisms::adversarial::{
    consistent_priority_orderings, lifted_band_state, priority_adversarial_states, quota_adversarial_states,
    search_quota_policies, state_optimum,
};
use crate::mechanisms::{
    brute_force_optimum, continuum_optimum, discrete_utility, equivalent_subsidy, optimal_apm,
    optimal_discrete_apm, rationalizing_priority, rationalizing_quota, run_apm_discrete, run_apm_greedy,
    run_priority_discrete, run_quota_discrete, PriorityPolicy, QuotaPolicy,
};
use crate::preferences::{DiversityUtility, Preferences, ScoreTransform};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn weitzman_agreement() -> Outcome {
    let omega = OmegaDistribution::uniform(vec![0.47, 0.485, 0.5, 0.515, 0.53]).map_err(|e| e.to_string())?;
    let rows = weitzman_oracle(
        &[0.1, 0.125, 0.15],
        &[0.75, 1.0, 1.25],
        &[7.5, 8.5, 9.5],
        0.5,
        &omega,
        SearchGrid::default(),
    )
    .map_err(|e| e.to_string())?;
    let worst = rows.iter().map(|r| r.max_relative_gap).fold(0.0, f64::max);
    let signs = rows.iter().filter(|r| r.sign_ok).count();
    let positive = rows.iter().filter(|r| r.closed.delta > 0.0).count();
    check(
        rows.len() == 27 && worst < 1e-3 && signs == rows.len(),
        format!(
            "{} settings, worst relative gap {worst:.2e}, Δ signs correct {signs}/{}, Δ > 0 in {positive}",
            rows.len(),
            rows.len()
        ),
    )
}

fn apm_first_best() -> Outcome {
    let mut rng = sample::rng(2);
    let mut exact = 0;
    for trial in 0..200 {
        let groups = rng.gen_range(1..=3);
        let e = sample::random_discrete(&mut rng, groups, 12);
        let us = (0..groups).map(|_| sample::random_concave_counts(&mut rng, e.len())).collect();
        let prefs = Preferences::new(ScoreTransform::Identity, us).map_err(|e| e.to_string())?;
        let apm = optimal_discrete_apm(&prefs).map_err(|e| e.to_string())?;
        let greedy = run_apm_discrete(&apm, &e).map_err(|e| e.to_string())?;
        let (best, best_u) = brute_force_optimum(&e, &prefs).map_err(|e| e.to_string())?;
        let u = discrete_utility(&e, &greedy, &prefs).map_err(|e| e.to_string())?;
        if u.to_bits() != best_u.to_bits() {
            return Err(format!(
                "discrete trial {trial}: greedy {u} vs optimum {best_u} (sets {:?} vs {:?})",
                greedy.admitted_indices(),
                best.admitted_indices()
            ));
        }
        exact += 1;
    }
    let mut worst: f64 = 0.0;
    let continuum = 10;
    for _ in 0..continuum {
        let groups = rng.gen_range(2..=3);
        let e = sample::random_continuum(&mut rng, groups, 2_000);
        let us = (0..groups).map(|_| sample::random_smooth(&mut rng)).collect();
        let prefs = Preferences::new(ScoreTransform::Identity, us).map_err(|e| e.to_string())?;
        let alloc = run_apm_greedy(&optimal_apm(&prefs).map_err(|e| e.to_string())?, &e).map_err(|e| e.to_string())?;
        let u = prefs
            .utility(alloc.score_index(&e, &|s| s), alloc.x())
            .map_err(|e| e.to_string())?;
        let (_, best) = continuum_optimum(&e, &prefs, 1e-10).map_err(|e| e.to_string())?;
        worst = worst.max((best - u) / best.abs());
    }
    check(
        worst < 1e-6,
        format!("{exact}/200 discrete economies bit-equal; {continuum} continuum economies (B = 2000) worst shortfall {worst:.2e}"),
    )
}

fn certificates() -> Outcome {
    let mut rng = sample::rng(3);
    for trial in 0..50 {
        let groups = rng.gen_range(2..=3);
        let e = sample::random_discrete(&mut rng, groups, 12);
        let us = (0..groups)
            .map(|_| DiversityUtility::Linear {
                slope: rng.gen_range(-0.5..0.5),
            })
            .collect();
        let prefs = Preferences::new(ScoreTransform::Identity, us).map_err(|e| e.to_string())?;
        let policy = rationalizing_priority(&prefs).map_err(|e| e.to_string())?;
        let a = run_priority_discrete(&policy, &e).map_err(|e| e.to_string())?;
        let b = run_apm_discrete(&optimal_discrete_apm(&prefs).map_err(|e| e.to_string())?, &e).map_err(|e| e.to_string())?;
        if a.admitted() != b.admitted() {
            return Err(format!("linear state {trial}: priority and adaptive priority differ"));
        }
    }
    for trial in 0..50 {
        let groups = rng.gen_range(2..=3);
        let e = sample::random_discrete(&mut rng, groups, 12);
        let mut left = e.capacity();
        let us = (0..groups)
            .map(|_| {
                let target = rng.gen_range(0..=left.min(3));
                left -= target;
                DiversityUtility::ExtremeTarget {
                    target: target as f64,
                    slope: 10.0,
                }
            })
            .collect();
        let prefs = Preferences::new(ScoreTransform::Identity, us).map_err(|e| e.to_string())?;
        let policy = rationalizing_quota(&prefs, e.capacity() as f64).map_err(|e| e.to_string())?;
        let a = run_quota_discrete(&policy, &e).map_err(|e| e.to_string())?;
        let b = run_apm_discrete(&optimal_discrete_apm(&prefs).map_err(|e| e.to_string())?, &e).map_err(|e| e.to_string())?;
        if a.admitted() != b.admitted() {
            return Err(format!("extreme-target state {trial}: quota and adaptive priority differ"));
        }
    }

    let (q, bins) = (0.5, 2_000);
    let prefs = Preferences::new(
        ScoreTransform::Identity,
        vec![
            DiversityUtility::LinearQuadratic { gamma: 0.4, beta: 1.0 },
            DiversityUtility::Power {
                coef: 0.2,
                exponent: 0.5,
            },
        ],
    )
    .map_err(|e| e.to_string())?;
    let states = priority_adversarial_states(&prefs, q, bins).map_err(|e| e.to_string())?;
    let cutoffs = states
        .iter()
        .map(|s| state_optimum(s, &prefs).map(|o| o.cutoffs))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let orderings = consistent_priority_orderings(&cutoffs, 0.2 / bins as f64);

    let mut quota_states = quota_adversarial_states(q, bins).map_err(|e| e.to_string())?;
    let first = state_optimum(&quota_states[0], &prefs).map_err(|e| e.to_string())?;
    quota_states.insert(2, lifted_band_state(q, bins, first.x[1]).map_err(|e| e.to_string())?);
    let optima = quota_states
        .iter()
        .map(|s| state_optimum(s, &prefs).map(|o| o.x))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let search = search_quota_policies(&quota_states, &optima, 20, 1e-6).map_err(|e| e.to_string())?;
    check(
        orderings.is_empty() && search.consistent.is_empty(),
        format!(
            "50 linear and 50 extreme-target states exact; concave case: {} consistent priority orderings, {} consistent quota policies (closest misses by {:.3})",
            orderings.len(),
            search.consistent.len(),
            search.best.0
        ),
    )
}

fn two_seat() -> Outcome {
    let betas: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let rows = two_seat_table(&betas, 200).map_err(|e| e.to_string())?;
    let worst = rows
        .iter()
        .map(|r| r.priority_error.max(r.quota_error))
        .fold(0.0, f64::max);
    let crossing = two_seat_crossing(0.49, 0.51, 200, 0).map_err(|e| e.to_string())?;
    check(
        worst <= 1e-4 && crossing.is_bracketed(),
        format!(
            "worst error {worst:.2e} over 11 values; V_P - V_Q = {:+.5} at 0.49 and {:+.5} at 0.51",
            crossing.gap_lo, crossing.gap_hi
        ),
    )
}

fn per_group_admissions(e: &MultiAuthorityEconomy, cutoffs: &crate::market::CutoffMatrix) -> Result<f64, String> {
    let summaries = authority_summaries(e, cutoffs).map_err(|e| e.to_string())?;
    Ok(summaries
        .iter()
        .flat_map(|s| s.x.iter().map(|x| (x - 0.25).abs()))
        .fold(0.0, f64::max))
}

fn stable_two_authority() -> Outcome {
    let e = two_authority_economy(800).map_err(|e| e.to_string())?;
    let s = stable_matching(&e).map_err(|e| e.to_string())?;
    let above = per_group_admissions(&e, &s.from_above)?;
    let below = per_group_admissions(&e, &s.from_below)?;
    let report = verify_stability(&e, &s.cutoffs, 1e-3).map_err(|e| e.to_string())?;
    let welfare_ok = (s.welfare - 1.875).abs() <= 1e-6;
    let detail = format!(
        "x* deviation {above:.1e} from above, {below:.1e} from below; stability clean: {}; welfare {:.6} vs target 1.875{}",
        report.is_clean(),
        s.welfare,
        if welfare_ok { "" } else { " (level unattainable under these primitives)" }
    );
    check(above <= 1e-6 && below <= 1e-6 && report.is_clean() && welfare_ok, detail)
}

fn dominance() -> Outcome {
    let mut rng = sample::rng(6);
    let economies = [
        two_authority_economy(800).map_err(|e| e.to_string())?,
        symmetric_economy(1_000).map_err(|e| e.to_string())?,
        three_authority_economy(1_000).map_err(|e| e.to_string())?,
    ];
    let mut worst_order: f64 = 0.0;
    for e in &economies {
        let n = e.authority_count();
        let stable = stable_matching(e).map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let out = sequential_simulation(e, &order, &vec![Strategy::OptimalApm; n]).map_err(|e| e.to_string())?;
            worst_order = worst_order.max(out.realized.sup_distance(&stable.cutoffs));
        }
    }
    let mut worst_margin = f64::INFINITY;
    for trial in 0..20 {
        let e = &economies[trial % economies.len()];
        let n = e.authority_count();
        let authority = rng.gen_range(0..n);
        let capacity = e.authorities()[authority].capacity;
        let deviation = if rng.gen_bool(0.5) {
            Strategy::Priority(PriorityPolicy::boosts(vec![0.0, rng.gen_range(-0.4..0.4)]))
        } else {
            let r0 = rng.gen_range(0.0..capacity);
            let r1 = rng.gen_range(0.0..capacity - r0);
            Strategy::Quota(QuotaPolicy::reserves_first(vec![r0, r1], capacity).map_err(|e| e.to_string())?)
        };
        let others: Vec<Strategy> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    Strategy::OptimalApm
                } else {
                    Strategy::Priority(PriorityPolicy::boosts(vec![0.0, rng.gen_range(-0.2..0.2)]))
                }
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let t = dominance_trial(e, &order, &others, authority, deviation).map_err(|e| e.to_string())?;
        worst_margin = worst_margin.min(t.margin);
    }
    check(
        worst_order <= 1e-6 && worst_margin >= 0.0,
        format!("15 stage orders: worst cutoff gap {worst_order:.1e}; 20 deviations: smallest margin {worst_margin:.3e}"),
    )
}

fn apmq_efficiency() -> Outcome {
    let e = two_authority_economy(800).map_err(|e| e.to_string())?;
    let out = apmq_allocate(&e).map_err(|e| e.to_string())?;
    let pattern = out
        .table
        .iter()
        .flat_map(|row| row.iter())
        .map(|&x| (x - 0.4).abs().min((x - 0.1).abs()))
        .fold(0.0, f64::max);
    let level_ok = (out.welfare - 1.8953).abs() <= 1e-3 && out.welfare > 1.875;
    check(
        pattern <= 1e-4 && out.kkt_residual < 1e-8 && out.welfare > out.stable_welfare && level_ok,
        format!(
            "table {:?}, pattern gap {pattern:.1e}, KKT residual {:.1e}; welfare {:.6} vs stable {:.6} (gain {:.6}); target 1.8953{}",
            out.table,
            out.kkt_residual,
            out.welfare,
            out.stable_welfare,
            out.welfare - out.stable_welfare,
            if level_ok { "" } else { " unattainable under these primitives" }
        ),
    )
}

fn h1b() -> Outcome {
    let a = equivalent_subsidy(137_017.0, 55_900.0, 85_000.0, 33_495.0).map_err(|e| e.to_string())?;
    let b = equivalent_subsidy(137_017.0, 55_900.0, 85_000.0, 38_834.0).map_err(|e| e.to_string())?;
    check(
        (a.alpha - 23.0).abs() <= 1.0 && (b.alpha - 35.0).abs() <= 1.0,
        format!("alpha {:.2} and {:.2}", a.alpha, b.alpha),
    )
}

fn estimation() -> Outcome {
    let truth = [-200.0, 2.0];
    let sb = synthetic_belief(&SyntheticConfig::default()).map_err(|e| e.to_string())?;
    let problem = EstimationProblem::new(
        sb.model.clone(),
        sb.reserves.clone(),
        CpsFamily::Cps,
        DEFAULT_STEP,
        SearchConfig::default_for(CpsFamily::Cps),
    )
    .map_err(|e| e.to_string())?;
    let residual = problem
        .moments(&truth)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|g| g.abs())
        .fold(0.0, f64::max);
    let est = estimate(&problem).map_err(|e| e.to_string())?;
    let errors: Vec<f64> = est.parameters.iter().zip(truth).map(|(p, t)| ((p - t) / t).abs()).collect();
    let homogeneous = EstimationProblem::new(
        sb.model,
        sb.reserves,
        CpsFamily::CpsHomogeneous,
        DEFAULT_STEP,
        SearchConfig::default_for(CpsFamily::CpsHomogeneous),
    )
    .map_err(|e| e.to_string())?;
    let curve = estimate(&homogeneous).map_err(|e| e.to_string())?.curve;
    let increasing = curve_magnitude_increasing(&curve);
    check(
        residual < 1e-5 && errors.iter().all(|&e| e < 0.05) && increasing,
        format!(
            "moment residual at truth {residual:.1e}; estimate ({:.3}, {:.4}), relative errors {:.1e}/{:.1e}; |β*(γ)| increasing over {} points: {increasing}",
            est.parameters[0], est.parameters[1], errors[0], errors[1], curve.len()
        ),
    )
}

fn precedence() -> Outcome {
    let omega = OmegaDistribution::uniform(vec![0.47, 0.485, 0.5, 0.515, 0.53]).map_err(|e| e.to_string())?;
    let mut worst_alloc: f64 = 0.0;
    let mut worst_value: f64 = 0.0;
    let mut cases = 0;
    for (kappa, gamma, beta) in [(0.125, 1.0, 8.5), (0.1, 0.75, 9.5), (0.15, 1.25, 7.5)] {
        let setting = WeitzmanSetting::new(kappa, gamma, beta, 0.5, omega.clone()).map_err(|e| e.to_string())?;
        let star = weitzman_closed_forms(&setting).quota_star;
        for quota in [0.25 * kappa, star, 0.9 * kappa] {
            let c = precedence_check(&setting, quota, 2_000).map_err(|e| e.to_string())?;
            worst_alloc = worst_alloc.max(c.max_allocation_gap);
            worst_value = worst_value.max((c.v_quota_second - c.v_priority).abs());
            cases += 1;
        }
    }
    check(
        worst_alloc <= 1e-12 && worst_value < 1e-9,
        format!("{cases} (setting, quota) pairs: allocation gap {worst_alloc:.1e}, |V_Q2 - V_P| {worst_value:.1e}"),
    )
}

/// A named acceptance check.
#[derive(Clone, Copy)]
pub struct Criterion {
    pub name: &'static str,
    run: fn() -> Outcome,
}

pub fn criteria() -> [Criterion; 10] {
    [
        Criterion { name: "weitzman oracle agreement", run: weitzman_agreement },
        Criterion { name: "adaptive priority is first-best", run: apm_first_best },
        Criterion { name: "priority and quota certificates", run: certificates },
        Criterion { name: "two-seat crossing", run: two_seat },
        Criterion { name: "two-authority stable matching", run: stable_two_authority },
        Criterion { name: "dominance and order invariance", run: dominance },
        Criterion { name: "efficient multi-authority rule", run: apmq_efficiency },
        Criterion { name: "equivalent subsidy", run: h1b },
        Criterion { name: "estimation recovery", run: estimation },
        Criterion { name: "quota-second precedence", run: precedence },
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub index: usize,
    pub name: String,
    pub passed: bool,
    pub seconds: f64,
    pub detail: String,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {}: {} ({:.1}s) {}",
            self.index,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.seconds,
            self.detail
        )
    }
}

impl Criterion {
    /// Runs the check; a panic counts as a failure.
    pub fn run(&self, index: usize) -> CriterionReport {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(self.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (passed, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        CriterionReport {
            index,
            name: self.name.to_string(),
            passed,
            seconds: t.elapsed().as_secs_f64(),
            detail,
        }
    }
}
