use std::path::Path;

use anyhow::Result;
use apm_core::analytics::{
    two_seat_crossing, two_seat_table, weitzman_closed_forms, weitzman_oracle, OmegaDistribution, SearchGrid,
    WeitzmanSetting,
};
use apm_core::market::{apmq_allocate, stable_matching_with, two_authority_economy, MAX_ITERATIONS, STABLE_TOL};
use apm_core::mechanisms::equivalent_subsidy;
use apm_core::selfcheck::criteria;
use serde::Deserialize;
use serde_json::json;

use crate::load;
use crate::output::{col, int, num, Kind, Run, Table};
use crate::{Common, OracleKind};

pub fn oracle(run: &mut Run, common: &Common, which: OracleKind) -> Result<()> {
    match which {
        OracleKind::Weitzman => weitzman(run, common),
        OracleKind::TwoSeat => two_seat(run, common),
        OracleKind::TwoAuthority => two_authority(run, common),
        OracleKind::H1b => h1b(run),
    }
}

fn weitzman(run: &mut Run, common: &Common) -> Result<()> {
    let levels = common.grid_bins.unwrap_or(SearchGrid::default().levels);
    let grid = SearchGrid {
        levels,
        parameters: 2 * levels,
    };
    let (kappas, gammas, betas, q) = ([0.1, 0.125, 0.15], [0.75, 1.0, 1.25], [7.5, 8.5, 9.5], 0.5);
    let omega = OmegaDistribution::uniform(vec![0.47, 0.485, 0.5, 0.515, 0.53])?;
    run.param("grid", grid);
    run.param("q", q);
    run.param("omega", &omega);
    let rows = weitzman_oracle(&kappas, &gammas, &betas, q, &omega, grid)?;
    let mut t = Table::new(vec![
        col("kappa", Kind::Number, "minority share of applicants"),
        col("gamma", Kind::Number, "slope of the linear part of the minority utility"),
        col("beta", Kind::Number, "curvature of the minority utility"),
        col("sensitivity", Kind::Number, "kappa * gamma * beta"),
        col("v_star_closed", Kind::Number, "first-best expected utility, closed form"),
        col("v_star_numeric", Kind::Number, "first-best expected utility, direct search"),
        col("v_priority_closed", Kind::Number, "best priority, closed form"),
        col("v_priority_numeric", Kind::Number, "best priority, direct search"),
        col("v_quota_closed", Kind::Number, "best quota, closed form"),
        col("v_quota_numeric", Kind::Number, "best quota, direct search"),
        col("delta_closed", Kind::Number, "priority minus quota, closed form"),
        col("delta_numeric", Kind::Number, "priority minus quota, direct search"),
        col("alpha_closed", Kind::Number, "optimal boost, closed form"),
        col("alpha_numeric", Kind::Number, "optimal boost, direct search"),
        col("quota_closed", Kind::Number, "optimal reserve, closed form"),
        col("quota_numeric", Kind::Number, "optimal reserve, direct search"),
        col("max_relative_gap", Kind::Number, "largest relative gap over the four values"),
        col("sign_ok", Kind::Boolean, "sign of delta matches 1 - sensitivity in both routes"),
    ]);
    for r in &rows {
        t.push(vec![
            num(r.kappa),
            num(r.gamma),
            num(r.beta),
            num(r.kappa * r.gamma * r.beta),
            num(r.closed.v_star),
            num(r.numeric.v_star),
            num(r.closed.v_priority),
            num(r.numeric.v_priority),
            num(r.closed.v_quota),
            num(r.numeric.v_quota),
            num(r.closed.delta),
            num(r.numeric.delta),
            num(r.closed.alpha_star),
            num(r.numeric.alpha),
            num(r.closed.quota_star),
            num(r.numeric.quota),
            num(r.max_relative_gap),
            r.sign_ok.to_string(),
        ]);
    }
    run.csv("weitzman", &t)
}

fn two_seat(run: &mut Run, common: &Common) -> Result<()> {
    let nodes = common.grid_bins.unwrap_or(200);
    run.param("nodes", nodes);
    let betas: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let rows = two_seat_table(&betas, nodes)?;
    let mut t = Table::new(vec![
        col("beta", Kind::Number, "value of the second seat going to the minority"),
        col("v_priority_closed", Kind::Number, "best priority, closed form"),
        col("v_priority_numeric", Kind::Number, "best priority, quadrature"),
        col("v_quota_closed", Kind::Number, "best quota, closed form"),
        col("v_quota_numeric", Kind::Number, "best quota, quadrature"),
        col("alpha_star", Kind::Number, "optimal boost"),
        col("quota_star", Kind::Integer, "optimal number of reserved seats"),
        col("priority_error", Kind::Number, "closed minus numeric priority value"),
        col("quota_error", Kind::Number, "closed minus numeric quota value"),
    ]);
    for r in &rows {
        t.push(vec![
            num(r.closed.beta),
            num(r.closed.v_priority),
            num(r.numeric.v_priority),
            num(r.closed.v_quota),
            num(r.numeric.v_quota),
            num(r.closed.alpha_star),
            int(r.closed.quota_star as i64),
            num(r.priority_error),
            num(r.quota_error),
        ]);
    }
    run.csv("two_seat", &t)?;
    let crossing = two_seat_crossing(0.45, 0.55, nodes, 10)?;
    run.json(
        "crossing.json",
        &json!({
            "lo": crossing.lo,
            "hi": crossing.hi,
            "gap_lo": crossing.gap_lo,
            "gap_hi": crossing.gap_hi,
            "bracketed": crossing.is_bracketed(),
            "beta": crossing.beta,
        }),
    )
}

fn two_authority(run: &mut Run, common: &Common) -> Result<()> {
    let bins = common.grid_bins.unwrap_or(800);
    let tol = common.tol.unwrap_or(STABLE_TOL);
    run.param("bins", bins);
    run.param("tol", tol);
    let market = two_authority_economy(bins)?;
    let stable = stable_matching_with(&market, tol, MAX_ITERATIONS)?;
    let efficient = apmq_allocate(&market)?;
    let g = market.groups();
    let mut cols = vec![
        col("regime", Kind::String, "stable or efficient"),
        col("authority", Kind::Integer, "authority index"),
        col("name", Kind::String, "authority name"),
    ];
    for m in 0..g {
        cols.push(col(format!("admitted_{m}"), Kind::Number, format!("mass of group {m} admitted")));
    }
    cols.push(col("utility", Kind::Number, "the authority's utility"));
    let mut t = Table::new(cols);
    for (c, s) in stable.summaries.iter().enumerate() {
        let mut row = vec!["stable".into(), int(c as i64), s.name.clone()];
        row.extend(s.x.iter().map(|x| num(*x)));
        row.push(num(s.utility));
        t.push(row);
    }
    for (c, a) in market.authorities().iter().enumerate() {
        let mut row = vec!["efficient".into(), int(c as i64), a.name.clone()];
        row.extend((0..g).map(|m| num(efficient.table[m][c])));
        row.push(num(efficient.utilities[c]));
        t.push(row);
    }
    run.csv("two_authority", &t)?;
    run.json(
        "summary.json",
        &json!({
            "stable_welfare": stable.welfare,
            "efficient_welfare": efficient.welfare,
            "stable_cutoffs": stable.cutoffs.rows(),
            "efficient_cutoffs": efficient.cutoffs,
            "kkt_residual": efficient.kkt_residual,
            "warnings": stable.warnings,
        }),
    )
}

fn h1b(run: &mut Run) -> Result<()> {
    let (general, eligible, visas) = (137_017.0, 55_900.0, 85_000.0);
    let mut t = Table::new(vec![
        col("scenario", Kind::String, "which count of eligible admissions is matched"),
        col("eligible_admitted", Kind::Number, "eligible applicants admitted"),
        col("cutoff", Kind::Number, "common lottery cutoff on the 0 to 100 scale"),
        col("alpha", Kind::Number, "boost for eligible applicants"),
    ]);
    for (scenario, target) in [("low", 33_495.0), ("high", 38_834.0)] {
        let s = equivalent_subsidy(general, eligible, visas, target)?;
        t.push(vec![scenario.into(), num(target), num(s.cutoff), num(s.alpha)]);
    }
    run.param("general_applicants", general);
    run.param("eligible_applicants", eligible);
    run.param("visas", visas);
    run.csv("h1b", &t)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeitzmanGrid {
    kappa: Vec<f64>,
    gamma: Vec<f64>,
    beta: Vec<f64>,
    q: f64,
    omega: OmegaFile,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OmegaFile {
    points: Vec<f64>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
}

/// Closed-form priority versus quota comparison over a parameter grid.
/// Combinations without interior optima are listed in the summary.
pub fn compare_weitzman(run: &mut Run, _common: &Common, path: &Path) -> Result<()> {
    let grid: WeitzmanGrid = load::json(run, "weitzman", path)?;
    let omega = match grid.omega.weights {
        Some(w) => OmegaDistribution::new(grid.omega.points, w)?,
        None => OmegaDistribution::uniform(grid.omega.points)?,
    };
    let mut t = Table::new(vec![
        col("kappa", Kind::Number, "minority share of applicants"),
        col("gamma", Kind::Number, "slope of the linear part of the minority utility"),
        col("beta", Kind::Number, "curvature of the minority utility"),
        col("sensitivity", Kind::Number, "kappa * gamma * beta"),
        col("v_star", Kind::Number, "first-best expected utility"),
        col("v_priority", Kind::Number, "best priority"),
        col("v_quota", Kind::Number, "best quota"),
        col("delta", Kind::Number, "v_priority - v_quota"),
        col("delta_star", Kind::Number, "v_star minus the better of v_priority and v_quota"),
        col("alpha_star", Kind::Number, "optimal boost"),
        col("quota_star", Kind::Number, "optimal reserve"),
        col("preferred", Kind::String, "priority, quota or tie"),
    ]);
    let mut skipped = Vec::new();
    for &k in &grid.kappa {
        for &g in &grid.gamma {
            for &b in &grid.beta {
                let setting = match WeitzmanSetting::new(k, g, b, grid.q, omega.clone()) {
                    Ok(s) => s,
                    Err(apm_core::Error::Invalid(reason)) => {
                        skipped.push(json!({"kappa": k, "gamma": g, "beta": b, "reason": reason}));
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                let c = weitzman_closed_forms(&setting);
                let preferred = if c.delta > 0.0 {
                    "priority"
                } else if c.delta < 0.0 {
                    "quota"
                } else {
                    "tie"
                };
                t.push(vec![
                    num(k),
                    num(g),
                    num(b),
                    num(setting.sensitivity()),
                    num(c.v_star),
                    num(c.v_priority),
                    num(c.v_quota),
                    num(c.delta),
                    num(c.delta_star),
                    num(c.alpha_star),
                    num(c.quota_star),
                    preferred.into(),
                ]);
            }
        }
    }
    if t.len() == 0 {
        anyhow::bail!(apm_core::Error::Invalid("no parameter combination has interior optima".into()));
    }
    run.csv("weitzman", &t)?;
    run.json("summary.json", &json!({"rows": t.len(), "skipped": skipped}))
}

/// Runs the acceptance checks and returns how many failed.
pub fn selftest(run: &mut Run, only: &[usize]) -> Result<usize> {
    let all = criteria();
    if let Some(bad) = only.iter().find(|&&i| i == 0 || i > all.len()) {
        anyhow::bail!(apm_core::Error::Invalid(format!("no check {bad}; checks run from 1 to {}", all.len())));
    }
    run.param("only", only);
    let mut t = Table::new(vec![
        col("index", Kind::Integer, "check number"),
        col("name", Kind::String, "what is checked"),
        col("passed", Kind::Boolean, "whether the check passed"),
        col("detail", Kind::String, "measured values"),
    ]);
    let mut failed = 0;
    for (i, c) in all.iter().enumerate() {
        let index = i + 1;
        if !only.is_empty() && !only.contains(&index) {
            continue;
        }
        let report = c.run(index);
        println!("{}", report.line());
        if !report.passed {
            failed += 1;
        }
        t.push(vec![int(index as i64), report.name, report.passed.to_string(), report.detail]);
    }
    run.csv("selftest", &t)?;
    Ok(failed)
}
