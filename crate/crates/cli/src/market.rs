use std::path::Path;

use anyhow::Result;
use apm_core::market::{apmq_allocate, stable_matching_with, verify_stability, MultiAuthorityEconomy, MAX_ITERATIONS, STABLE_TOL};
use serde_json::json;

use crate::load;
use crate::output::{col, int, num, Kind, Run, Table};
use crate::Common;

fn cutoff_table(market: &MultiAuthorityEconomy, rows: &[Vec<f64>], what: &str) -> Table {
    let mut t = Table::new(vec![
        col("group", Kind::Integer, "group index"),
        col("authority", Kind::Integer, "authority index"),
        col("name", Kind::String, "authority name"),
        col(what, Kind::Number, format!("{what} of the group at the authority")),
    ]);
    for (m, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            t.push(vec![int(m as i64), int(c as i64), market.authorities()[c].name.clone(), num(*v)]);
        }
    }
    t
}

pub fn stable(run: &mut Run, common: &Common, path: &Path, epsilon: f64) -> Result<()> {
    let market = load::market(run, path)?;
    let tol = common.tol.unwrap_or(STABLE_TOL);
    run.param("tol", tol);
    run.param("epsilon", epsilon);
    let matching = stable_matching_with(&market, tol, MAX_ITERATIONS)?;
    run.csv("cutoffs", &cutoff_table(&market, &matching.cutoffs.rows(), "cutoff"))?;

    let g = market.groups();
    let mut cols = vec![
        col("authority", Kind::Integer, "authority index"),
        col("name", Kind::String, "authority name"),
        col("capacity", Kind::Number, "seats"),
    ];
    for m in 0..g {
        cols.push(col(format!("admitted_{m}"), Kind::Number, format!("mass of group {m} admitted")));
    }
    cols.push(col("score_index", Kind::Number, "integral of h over admitted scores"));
    cols.push(col("utility", Kind::Number, "the authority's utility"));
    cols.push(col("unfillable", Kind::Boolean, "fewer agents apply than the capacity"));
    let mut auth = Table::new(cols);
    for (c, s) in matching.summaries.iter().enumerate() {
        let mut row = vec![int(c as i64), s.name.clone(), num(market.authorities()[c].capacity)];
        row.extend(s.x.iter().map(|x| num(*x)));
        row.extend([num(s.score_index), num(s.utility), s.unfillable.to_string()]);
        auth.push(row);
    }
    run.csv("authorities", &auth)?;

    let report = verify_stability(&market, &matching.cutoffs, epsilon)?;
    run.json(
        "certificate.json",
        &json!({
            "stable": report.is_clean(),
            "welfare": matching.welfare,
            "iterations_from_above": matching.iterations_from_above,
            "iterations_from_below": matching.iterations_from_below,
            "gap": matching.gap,
            "from_above": matching.from_above.rows(),
            "from_below": matching.from_below.rows(),
            "stability": report,
            "warnings": matching.warnings,
        }),
    )
}

pub fn apmq(run: &mut Run, path: &Path) -> Result<()> {
    let market = load::market(run, path)?;
    let out = apmq_allocate(&market)?;
    run.csv("allocation", &cutoff_table(&market, &out.table, "admitted"))?;

    let mut slices = Table::new(vec![
        col("group", Kind::Integer, "group index"),
        col("authority", Kind::Integer, "authority index"),
        col("low", Kind::Number, "lowest score of the slice"),
        col("high", Kind::Number, "score where the slice ends"),
    ]);
    for (m, row) in out.slices.iter().enumerate() {
        for (c, (lo, hi)) in row.iter().enumerate() {
            slices.push(vec![int(m as i64), int(c as i64), num(*lo), num(*hi)]);
        }
    }
    run.csv("slices", &slices)?;

    run.json(
        "summary.json",
        &json!({
            "welfare": out.welfare,
            "stable_welfare": out.stable_welfare,
            "utilities": out.utilities,
            "cutoffs": out.cutoffs,
            "thresholds": out.thresholds,
            "lambda": out.policy.lambda,
            "gamma": out.policy.gamma,
            "aggregate": out.policy.y,
            "kkt_residual": out.kkt_residual,
            "best_perturbation_gain": out.best_perturbation_gain,
        }),
    )
}
