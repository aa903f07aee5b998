use rayon::prelude::*;

use super::{CutoffMatrix, MultiAuthorityEconomy};
use crate::economy::{ContinuumEconomy, GroupId};
use crate::error::Result;
use crate::mechanisms::{optimal_apm, run_apm_greedy, run_priority, run_quota, AdaptivePriority, PriorityPolicy, QuotaPolicy};

/// How an authority admits from the agents who apply to it.
#[derive(Debug, Clone)]
pub enum Strategy {
    /// The first-best adaptive priority for the authority's own preferences.
    OptimalApm,
    Apm(AdaptivePriority),
    Priority(PriorityPolicy),
    Quota(QuotaPolicy),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::OptimalApm => "optimal-apm",
            Strategy::Apm(_) => "apm",
            Strategy::Priority(_) => "priority",
            Strategy::Quota(_) => "quota",
        }
    }
}

/// A strategy with the optimal adaptive priority already built.
#[derive(Debug, Clone)]
pub(crate) enum Resolved {
    Apm(AdaptivePriority),
    Priority(PriorityPolicy),
    Quota(QuotaPolicy),
}

pub(crate) fn resolve(economy: &MultiAuthorityEconomy, strategies: &[Strategy]) -> Result<Vec<Resolved>> {
    strategies
        .iter()
        .zip(economy.authorities())
        .map(|(s, a)| {
            Ok(match s {
                Strategy::OptimalApm => Resolved::Apm(optimal_apm(&a.prefs)?),
                Strategy::Apm(p) => Resolved::Apm(p.clone()),
                Strategy::Priority(p) => Resolved::Priority(p.clone()),
                Strategy::Quota(p) => Resolved::Quota(p.clone()),
            })
        })
        .collect()
}

/// An authority's cutoffs against a given applicant pool.
#[derive(Debug, Clone)]
pub(crate) struct Response {
    pub column: Vec<f64>,
    pub admitted: Vec<f64>,
    /// The pool was smaller than the capacity, so everyone was admitted.
    pub unfillable: bool,
}

pub(crate) fn respond(pool: &ContinuumEconomy, rule: &Resolved) -> Result<Response> {
    let g = pool.groups();
    let q = pool.capacity();
    if pool.total_mass() < q * (1.0 - 1e-12) {
        return Ok(Response {
            column: vec![0.0; g],
            admitted: (0..g).map(|m| pool.group_mass(GroupId(m))).collect(),
            unfillable: true,
        });
    }
    let alloc = match rule {
        Resolved::Apm(p) => run_apm_greedy(p, pool)?,
        Resolved::Priority(p) => run_priority(p, pool)?,
        Resolved::Quota(p) => run_quota(p, pool)?,
    };
    let column = (0..g).map(|m| pool.cutoff_for_mass(GroupId(m), alloc.x()[m])).collect();
    Ok(Response {
        column,
        admitted: alloc.x().to_vec(),
        unfillable: false,
    })
}

/// One application of the best-response map: every authority answers the
/// pool induced by the other authorities' cutoffs.
pub(crate) fn respond_all(
    economy: &MultiAuthorityEconomy,
    rules: &[Resolved],
    cutoffs: &CutoffMatrix,
) -> Result<(CutoffMatrix, Vec<bool>)> {
    let answers: Vec<Response> = (0..economy.authority_count())
        .into_par_iter()
        .map(|c| {
            let pool = economy.induced_economy(c, cutoffs)?;
            respond(&pool, &rules[c])
        })
        .collect::<Result<_>>()?;
    let mut next = cutoffs.clone();
    let mut unfillable = Vec::with_capacity(answers.len());
    for (c, a) in answers.into_iter().enumerate() {
        for (m, v) in a.column.into_iter().enumerate() {
            next.set(m, c, v);
        }
        unfillable.push(a.unfillable);
    }
    Ok((next, unfillable))
}
