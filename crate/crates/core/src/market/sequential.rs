//! Decentralized admissions in stages.
//!
//! Agents apply to the authority moving at each stage when it is the best
//! authority they can still reach: earlier authorities at their realized
//! cutoffs, later ones at the equilibrium cutoffs. The equilibrium cutoffs
//! are the fixed point of the best-response map under the strategy profile.

use serde::Serialize;

use super::response::{resolve, respond, respond_all, Resolved, Strategy};
use super::stable::{evaluate, MAX_ITERATIONS, STABLE_TOL};
use super::{CutoffMatrix, MultiAuthorityEconomy};
use crate::economy::GroupId;
use crate::error::{Error, Result};

/// What happened at one stage.
#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub authority: usize,
    pub strategy: String,
    /// Mass of each group that applied.
    pub applicants: Vec<f64>,
    pub admitted: Vec<f64>,
    pub cutoffs: Vec<f64>,
    pub utility: f64,
}

/// Result of a staged admission game.
#[derive(Debug, Clone, Serialize)]
pub struct SequentialOutcome {
    pub order: Vec<usize>,
    pub equilibrium: CutoffMatrix,
    pub realized: CutoffMatrix,
    pub stages: Vec<Stage>,
    /// Utility of each authority, indexed by authority.
    pub utilities: Vec<f64>,
    /// Largest gap between stage admissions and the demand the realized
    /// cutoffs induce; zero when no agent prefers an authority whose cutoff
    /// it clears.
    pub ex_post_gap: f64,
}

impl SequentialOutcome {
    pub fn is_ex_post_consistent(&self) -> bool {
        self.ex_post_gap <= 1e-7
    }
}

fn resolved_fixed_point(economy: &MultiAuthorityEconomy, rules: &[Resolved]) -> Result<CutoffMatrix> {
    let mut s = CutoffMatrix::filled(economy.groups(), economy.authority_count(), 1.0);
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let (next, _) = respond_all(economy, rules, &s)?;
        residual = next.sup_distance(&s);
        s = next;
        if residual <= STABLE_TOL {
            return Ok(s);
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual,
    })
}

/// Fixed point of the best-response map under a strategy profile, reached
/// from all cutoffs at 1.
pub fn equilibrium_cutoffs(economy: &MultiAuthorityEconomy, strategies: &[Strategy]) -> Result<CutoffMatrix> {
    if strategies.len() != economy.authority_count() {
        return Err(Error::invalid("need one strategy per authority"));
    }
    resolved_fixed_point(economy, &resolve(economy, strategies)?)
}

fn check_order(economy: &MultiAuthorityEconomy, order: &[usize]) -> Result<()> {
    let n = economy.authority_count();
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::invalid("the stage order must list every authority once"));
    }
    for &c in order {
        if c >= n || seen[c] {
            return Err(Error::invalid("the stage order must list every authority once"));
        }
        seen[c] = true;
    }
    Ok(())
}

/// Runs the staged game with authorities moving in `order`.
pub fn sequential_simulation(
    economy: &MultiAuthorityEconomy,
    order: &[usize],
    strategies: &[Strategy],
) -> Result<SequentialOutcome> {
    check_order(economy, order)?;
    if strategies.len() != economy.authority_count() {
        return Err(Error::invalid("need one strategy per authority"));
    }
    let rules = resolve(economy, strategies)?;
    let equilibrium = resolved_fixed_point(economy, &rules)?;
    staged(economy, order, strategies, &rules, equilibrium)
}

/// Plays the stages with agents applying according to `equilibrium`.
fn staged(
    economy: &MultiAuthorityEconomy,
    order: &[usize],
    strategies: &[Strategy],
    rules: &[Resolved],
    equilibrium: CutoffMatrix,
) -> Result<SequentialOutcome> {
    // Earlier authorities at realized cutoffs, later ones at equilibrium.
    let mut realized = equilibrium.clone();
    let mut stages = Vec::with_capacity(order.len());
    let mut utilities = vec![0.0; order.len()];
    let mut stage_admitted = vec![Vec::new(); order.len()];
    for &c in order {
        let authority = &economy.authorities()[c];
        let pool = economy.induced_economy(c, &realized)?;
        let answer = respond(&pool, &rules[c])?;
        let total: f64 = answer.admitted.iter().sum();
        if total > authority.capacity * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::Protocol(format!(
                "authority {} admitted {total} above its capacity {}",
                authority.name, authority.capacity
            )));
        }
        for (m, &v) in answer.column.iter().enumerate() {
            realized.set(m, c, v);
        }
        let (x, _, utility) = evaluate(&pool, &authority.prefs, &answer.column)?;
        utilities[c] = utility;
        stages.push(Stage {
            authority: c,
            strategy: strategies[c].name().to_string(),
            applicants: (0..economy.groups())
                .map(|m| pool.group_mass(GroupId(m)))
                .collect(),
            admitted: x.clone(),
            cutoffs: answer.column,
            utility,
        });
        stage_admitted[c] = x;
    }
    let demand = economy.demand(&realized)?;
    let ex_post_gap = demand
        .iter()
        .zip(&stage_admitted)
        .flat_map(|(d, s)| d.iter().zip(s).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    Ok(SequentialOutcome {
        order: order.to_vec(),
        equilibrium,
        realized,
        stages,
        utilities,
        ex_post_gap,
    })
}

/// One comparison of an authority's optimal adaptive priority against a
/// deviation, with the other authorities' strategies fixed.
#[derive(Debug, Clone, Serialize)]
pub struct DominanceTrial {
    pub authority: usize,
    pub deviation: String,
    pub apm_utility: f64,
    pub deviation_utility: f64,
    /// `apm_utility - deviation_utility`.
    pub margin: f64,
}

/// Plays the staged game twice, once with `authority` on its optimal
/// adaptive priority and once on `deviation`. Agents apply by the same
/// rule in both plays, the one induced by the profile with `authority` on
/// its optimal adaptive priority, so that only the admission rule changes.
pub fn dominance_trial(
    economy: &MultiAuthorityEconomy,
    order: &[usize],
    others: &[Strategy],
    authority: usize,
    deviation: Strategy,
) -> Result<DominanceTrial> {
    if authority >= economy.authority_count() {
        return Err(Error::invalid("unknown authority"));
    }
    check_order(economy, order)?;
    if others.len() != economy.authority_count() {
        return Err(Error::invalid("need one strategy per authority"));
    }
    let mut profile = others.to_vec();
    profile[authority] = Strategy::OptimalApm;
    let rules = resolve(economy, &profile)?;
    let applications = resolved_fixed_point(economy, &rules)?;
    let apm = staged(economy, order, &profile, &rules, applications.clone())?;
    let name = deviation.name().to_string();
    profile[authority] = deviation;
    let rules = resolve(economy, &profile)?;
    let dev = staged(economy, order, &profile, &rules, applications)?;
    let apm_utility = apm.utilities[authority];
    let deviation_utility = dev.utilities[authority];
    Ok(DominanceTrial {
        authority,
        deviation: name,
        apm_utility,
        deviation_utility,
        margin: apm_utility - deviation_utility,
    })
}
