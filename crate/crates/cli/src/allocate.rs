use std::path::Path;

use anyhow::{Context, Result};
use apm_core::economy::{allocation_utility, Allocation, Economy, Mechanism};
use apm_core::mechanisms::PolicySpec;
use apm_core::preferences::Preferences;
use serde_json::json;

use crate::load;
use crate::output::{col, int, num, Kind, Run, Table};
use crate::Common;

/// Per-group table for continuum allocations, plus a per-agent table for
/// discrete ones.
pub fn write_allocation(run: &mut Run, economy: &Economy, names: &[String], alloc: &Allocation) -> Result<()> {
    match (economy, alloc) {
        (Economy::Continuum(_), Allocation::Continuum(a)) => {
            let mut t = Table::new(vec![
                col("group", Kind::Integer, "group index"),
                col("name", Kind::String, "group name"),
                col("admitted", Kind::Number, "admitted mass"),
                col("cutoff", Kind::Number, "lowest score admitted outright"),
                col("floor", Kind::Number, "lower edge of the partially admitted score band"),
                col("fraction", Kind::Number, "share admitted within [floor, cutoff)"),
            ]);
            for (m, name) in names.iter().enumerate() {
                t.push(vec![
                    int(m as i64),
                    name.clone(),
                    num(a.x()[m]),
                    num(a.cutoffs()[m]),
                    num(a.floors()[m]),
                    num(a.fractions()[m]),
                ]);
            }
            run.csv("allocation", &t)
        }
        (Economy::Discrete(e), Allocation::Discrete(a)) => {
            let mut t = Table::new(vec![
                col("group", Kind::Integer, "group index"),
                col("name", Kind::String, "group name"),
                col("admitted", Kind::Integer, "agents admitted"),
                col("cutoff", Kind::Number, "lowest admitted score; empty when none is admitted"),
            ]);
            let cutoffs = a.cutoffs(e);
            for (m, name) in names.iter().enumerate() {
                t.push(vec![
                    int(m as i64),
                    name.clone(),
                    int(a.counts()[m] as i64),
                    cutoffs[m].map(num).unwrap_or_default(),
                ]);
            }
            run.csv("allocation", &t)?;
            let mut agents = Table::new(vec![
                col("agent", Kind::Integer, "position in the economy file"),
                col("score", Kind::Number, "score"),
                col("group", Kind::Integer, "group index"),
                col("admitted", Kind::Boolean, "whether the agent is admitted"),
            ]);
            for (i, agent) in e.agents().iter().enumerate() {
                agents.push(vec![
                    int(i as i64),
                    num(agent.score),
                    int(agent.group.0 as i64),
                    a.is_admitted(i).to_string(),
                ]);
            }
            run.csv("agents", &agents)
        }
        _ => anyhow::bail!(apm_core::Error::Integrity("allocation kind does not match the economy".into())),
    }
}

pub fn allocate(run: &mut Run, economy_path: &Path, policy_path: &Path, prefs_path: Option<&Path>) -> Result<()> {
    let (economy, names) = load::economy(run, economy_path)?;
    let spec = load::policy(run, policy_path)?;
    let prefs = prefs_path.map(|p| load::prefs(run, p)).transpose()?;
    let policy = spec.build(economy.groups(), economy.capacity(), prefs.as_ref())?;
    let alloc = policy.allocate(&economy)?;
    write_allocation(run, &economy, &names, &alloc)?;
    let utility = prefs.as_ref().map(|p| allocation_utility(&economy, &alloc, p)).transpose()?;
    run.json(
        "summary.json",
        &json!({
            "policy": spec,
            "economy_kind": kind(&economy),
            "capacity": economy.capacity(),
            "admitted": alloc.x(),
            "utility": utility,
        }),
    )
}

fn kind(economy: &Economy) -> &'static str {
    match economy {
        Economy::Discrete(_) => "discrete",
        Economy::Continuum(_) => "continuum",
    }
}

pub fn optimal_apm(
    run: &mut Run,
    common: &Common,
    prefs_path: &Path,
    economy_path: Option<&Path>,
    y_max: Option<f64>,
) -> Result<()> {
    let prefs = load::prefs(run, prefs_path)?;
    let economy = economy_path.map(|p| load::economy(run, p)).transpose()?;
    if let Some((e, _)) = &economy {
        if e.groups() != prefs.groups() {
            anyhow::bail!(apm_core::Error::Invalid(format!(
                "preferences cover {} groups, the economy has {}",
                prefs.groups(),
                e.groups()
            )));
        }
    }
    let upper = y_max.unwrap_or_else(|| economy.as_ref().map_or(1.0, |(e, _)| e.capacity()));
    if !(upper > 0.0 && upper.is_finite()) {
        anyhow::bail!(apm_core::Error::Invalid("the admissions grid needs a positive upper end".into()));
    }
    let points = common.grid_bins.unwrap_or(101).max(2);
    run.param("y_max", upper);
    run.param("points", points);
    let utilities = prefs.separable().context("the optimal adaptive priority needs separable preferences")?;
    let g = utilities.len();

    let mut long = Table::new(vec![
        col("group", Kind::Integer, "group index"),
        col("admitted", Kind::Number, "admissions y of the group so far"),
        col("boost", Kind::Number, "priority added to h(s): the marginal diversity value u'(y)"),
    ]);
    let mut wide_cols = vec![col("admitted", Kind::Number, "admissions y of the group so far")];
    for m in 0..g {
        wide_cols.push(col(format!("boost_{m}"), Kind::Number, format!("u'(y) of group {m}")));
    }
    for m in 1..g {
        wide_cols.push(col(
            format!("relative_{m}"),
            Kind::Number,
            format!("boost of group 0 minus boost of group {m} at equal admissions"),
        ));
    }
    let mut wide = Table::new(wide_cols);
    for i in 0..points {
        let y = upper * i as f64 / (points - 1) as f64;
        let boosts: Vec<f64> = utilities.iter().map(|u| u.derivative(y)).collect();
        for (m, b) in boosts.iter().enumerate() {
            long.push(vec![int(m as i64), num(y), num(*b)]);
        }
        let mut row = vec![num(y)];
        row.extend(boosts.iter().map(|b| num(*b)));
        row.extend((1..g).map(|m| num(boosts[0] - boosts[m])));
        wide.push(row);
    }
    run.csv("policy", &long)?;
    run.csv("boost_curve", &wide)?;

    if let Some((e, names)) = &economy {
        if let Economy::Discrete(d) = e {
            let mut inc = Table::new(vec![
                col("group", Kind::Integer, "group index"),
                col("admitted", Kind::Integer, "agents of the group already admitted"),
                col("increment", Kind::Number, "priority added to h(s): u(k + 1) - u(k)"),
            ]);
            for (m, u) in utilities.iter().enumerate() {
                for k in 0..d.capacity() {
                    inc.push(vec![int(m as i64), int(k as i64), num(u.increment(k + 1))]);
                }
            }
            run.csv("increments", &inc)?;
        }
        let policy = PolicySpec::OptimalApm.build(e.groups(), e.capacity(), Some(&prefs))?;
        let alloc = policy.allocate(e)?;
        write_allocation(run, e, names, &alloc)?;
        run.json(
            "summary.json",
            &json!({
                "economy_kind": kind(e),
                "admitted": alloc.x(),
                "utility": allocation_utility(e, &alloc, &prefs)?,
            }),
        )?;
    }
    Ok(())
}

pub fn compare(run: &mut Run, belief_path: &Path, set_path: &Path, prefs_path: &Path) -> Result<()> {
    let belief = load::belief(run, belief_path)?;
    let set = load::policy_set(run, set_path)?;
    let prefs: Preferences = load::prefs(run, prefs_path)?;
    if prefs.groups() != belief.groups() {
        anyhow::bail!(apm_core::Error::Invalid("preferences and belief disagree on the number of groups".into()));
    }
    let mut per_state = Table::new(vec![
        col("policy", Kind::String, "policy name"),
        col("state", Kind::Integer, "state index in the belief"),
        col("weight", Kind::Number, "state probability"),
        col("utility", Kind::Number, "utility of the policy's allocation in the state"),
    ]);
    let mut values = Vec::with_capacity(set.len());
    for named in &set {
        let mut total = 0.0;
        for (i, (economy, w)) in belief.states().iter().enumerate() {
            let policy = named
                .spec
                .build(economy.groups(), economy.capacity(), Some(&prefs))
                .with_context(|| format!("policy {:?}", named.name))?;
            let u = policy
                .allocate(economy)
                .and_then(|a| allocation_utility(economy, &a, &prefs))
                .map_err(|e| apm_core::Error::InState { index: i, source: Box::new(e) })
                .with_context(|| format!("policy {:?}", named.name))?;
            per_state.push(vec![named.name.clone(), int(i as i64), num(*w), num(u)]);
            total += w * u;
        }
        values.push(total);
    }
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut summary = Table::new(vec![
        col("policy", Kind::String, "policy name"),
        col("kind", Kind::String, "priority, quota or optimal-apm"),
        col("expected_utility", Kind::Number, "utility averaged over the belief"),
        col("shortfall", Kind::Number, "best expected utility in the set minus this one"),
    ]);
    for (named, v) in set.iter().zip(&values) {
        summary.push(vec![named.name.clone(), named.spec.label().into(), num(*v), num(best - v)]);
    }
    run.csv("compare", &summary)?;
    run.csv("states", &per_state)
}
