use serde::{Deserialize, Serialize};

use super::clearing::shifted_clear;
use crate::economy::{Allocation, ContinuumEconomy, CutoffAllocation, DiscreteAllocation, DiscreteEconomy, Economy, GroupId, Mechanism};
use crate::error::{Error, Result};

/// One processing round of a quota policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Round {
    /// The reserve of one group.
    Group(usize),
    /// The residual capacity, open to every group by score.
    Residual,
}

/// Reserved amounts per group and the order in which rounds are processed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotaPolicy {
    reserves: Vec<f64>,
    precedence: Vec<Round>,
}

impl QuotaPolicy {
    /// Validates `Q_m >= 0`, `Σ Q_m <= capacity` and that the precedence
    /// lists every group and the residual exactly once.
    pub fn new(reserves: Vec<f64>, precedence: Vec<Round>, capacity: f64) -> Result<Self> {
        let g = reserves.len();
        if reserves.iter().any(|&r| !(r >= 0.0)) {
            return Err(Error::invalid("reserves must be nonnegative"));
        }
        let total: f64 = reserves.iter().sum();
        if total > capacity * (1.0 + 1e-12) {
            return Err(Error::invalid(format!("reserves total {total} exceed capacity {capacity}")));
        }
        if precedence.len() != g + 1 {
            return Err(Error::invalid("precedence must list every group and the residual once"));
        }
        let mut seen = vec![false; g];
        let mut residual = false;
        for r in &precedence {
            match *r {
                Round::Residual if !residual => residual = true,
                Round::Group(m) if m < g && !seen[m] => seen[m] = true,
                _ => return Err(Error::invalid("precedence is not a bijection")),
            }
        }
        Ok(QuotaPolicy { reserves, precedence })
    }

    /// Group reserves first, in index order, then the residual.
    pub fn reserves_first(reserves: Vec<f64>, capacity: f64) -> Result<Self> {
        let mut order: Vec<Round> = (0..reserves.len()).map(Round::Group).collect();
        order.push(Round::Residual);
        Self::new(reserves, order, capacity)
    }

    /// The residual first, then group reserves in index order.
    pub fn residual_first(reserves: Vec<f64>, capacity: f64) -> Result<Self> {
        let mut order = vec![Round::Residual];
        order.extend((0..reserves.len()).map(Round::Group));
        Self::new(reserves, order, capacity)
    }

    pub fn reserves(&self) -> &[f64] {
        &self.reserves
    }

    pub fn precedence(&self) -> &[Round] {
        &self.precedence
    }

    pub fn groups(&self) -> usize {
        self.reserves.len()
    }

    /// `q - Σ Q_m`.
    pub fn residual(&self, capacity: f64) -> f64 {
        (capacity - self.reserves.iter().sum::<f64>()).max(0.0)
    }

    /// Position of the residual round, counting from one.
    pub fn residual_position(&self) -> usize {
        self.precedence.iter().position(|r| *r == Round::Residual).unwrap_or(0) + 1
    }
}

/// Merit clearing of `amount` among the regions below `tops`.
fn merit_round(economy: &ContinuumEconomy, tops: &mut [f64], amount: f64) {
    let shifts = vec![0.0; tops.len()];
    let cleared = shifted_clear(economy, &shifts, tops, amount);
    tops.copy_from_slice(&cleared.cutoffs);
}

/// Runs a quota policy on a continuum economy.
///
/// Rounds follow the precedence order. A group round admits the best
/// unadmitted agents of its group up to the reserve; any shortfall rolls
/// into the residual round, or into a final merit round when the residual
/// has already been processed.
pub fn run_quota(policy: &QuotaPolicy, economy: &ContinuumEconomy) -> Result<CutoffAllocation> {
    if policy.groups() != economy.groups() {
        return Err(Error::invalid("policy and economy disagree on the number of groups"));
    }
    let q = economy.capacity();
    let total = economy.total_mass();
    if total < q * (1.0 - 1e-12) {
        return Err(Error::Infeasible {
            available: total,
            capacity: q,
        });
    }
    let mut tops = vec![1.0; economy.groups()];
    let mut shortfall = 0.0;
    for round in policy.precedence() {
        match *round {
            Round::Group(m) => {
                let g = GroupId(m);
                let reserve = policy.reserves()[m];
                let available = economy.mass_between(g, 0.0, tops[m]);
                let take = reserve.min(available);
                shortfall += reserve - take;
                if take > 0.0 {
                    let above = economy.mass_above(g, tops[m]);
                    tops[m] = economy.cutoff_for_mass(g, above + take).min(tops[m]);
                }
            }
            Round::Residual => {
                let amount = policy.residual(q) + shortfall;
                merit_round(economy, &mut tops, amount);
                shortfall = 0.0;
            }
        }
    }
    if shortfall > 0.0 {
        merit_round(economy, &mut tops, shortfall);
    }
    CutoffAllocation::from_cutoffs(economy, tops)
}

fn integer_reserve(r: f64) -> Result<usize> {
    let k = r.round();
    if (r - k).abs() > 1e-9 {
        return Err(Error::invalid(format!("discrete reserve {r} is not an integer")));
    }
    Ok(k as usize)
}

/// Runs a quota policy on a discrete economy; reserves must be integers.
pub fn run_quota_discrete(policy: &QuotaPolicy, economy: &DiscreteEconomy) -> Result<DiscreteAllocation> {
    if policy.groups() != economy.groups() {
        return Err(Error::invalid("policy and economy disagree on the number of groups"));
    }
    let q = economy.capacity();
    let reserves = policy
        .reserves()
        .iter()
        .map(|&r| integer_reserve(r))
        .collect::<Result<Vec<_>>>()?;
    let reserved: usize = reserves.iter().sum();
    if reserved > q {
        return Err(Error::invalid("reserves exceed capacity"));
    }
    let mut counts = vec![0usize; economy.groups()];
    let merit = |counts: &mut Vec<usize>, mut amount: usize| {
        while amount > 0 {
            let next = (0..counts.len())
                .filter_map(|m| {
                    economy
                        .ranked(GroupId(m))
                        .get(counts[m])
                        .map(|&i| (m, economy.agents()[i].score))
                })
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match next {
                Some((m, _)) => counts[m] += 1,
                None => break,
            }
            amount -= 1;
        }
    };
    let mut shortfall = 0usize;
    for round in policy.precedence() {
        match *round {
            Round::Group(m) => {
                let left = economy.group_size(GroupId(m)) - counts[m];
                let take = reserves[m].min(left);
                counts[m] += take;
                shortfall += reserves[m] - take;
            }
            Round::Residual => {
                merit(&mut counts, q - reserved + shortfall);
                shortfall = 0;
            }
        }
    }
    merit(&mut counts, shortfall);
    DiscreteAllocation::from_counts(economy, &counts)
}

impl Mechanism for QuotaPolicy {
    fn allocate(&self, economy: &Economy) -> Result<Allocation> {
        match economy {
            Economy::Continuum(c) => run_quota(self, c).map(Allocation::from),
            Economy::Discrete(d) => run_quota_discrete(self, d).map(Allocation::from),
        }
    }
}
