use serde::Serialize;

use super::response::{resolve, respond_all, Resolved, Strategy};
use super::{CutoffMatrix, MultiAuthorityEconomy, Population};
use crate::economy::{ContinuumEconomy, GroupId};
use crate::error::{Error, Result};
use crate::preferences::Preferences;

/// Sup-norm tolerance of the cutoff iterations.
pub const STABLE_TOL: f64 = 1e-9;

/// Iteration cap of the cutoff iterations.
pub const MAX_ITERATIONS: usize = 10_000;

/// The best-response map with every authority running its optimal
/// adaptive priority, with the priorities built once.
#[derive(Debug, Clone)]
pub struct TMap<'a> {
    economy: &'a MultiAuthorityEconomy,
    rules: Vec<Resolved>,
}

impl<'a> TMap<'a> {
    pub fn new(economy: &'a MultiAuthorityEconomy) -> Result<Self> {
        Self::with_strategies(economy, &vec![Strategy::OptimalApm; economy.authority_count()])
    }

    pub fn with_strategies(economy: &'a MultiAuthorityEconomy, strategies: &[Strategy]) -> Result<Self> {
        if strategies.len() != economy.authority_count() {
            return Err(Error::invalid("need one strategy per authority"));
        }
        Ok(TMap {
            economy,
            rules: resolve(economy, strategies)?,
        })
    }

    /// `T(S)` together with the authorities whose pools fall short of
    /// capacity.
    pub fn apply(&self, cutoffs: &CutoffMatrix) -> Result<(CutoffMatrix, Vec<bool>)> {
        check_shape(self.economy, cutoffs)?;
        respond_all(self.economy, &self.rules, cutoffs)
    }

    /// Iterates from `start` until successive cutoffs agree to `tol`.
    pub fn iterate(&self, start: CutoffMatrix, tol: f64, max_iterations: usize) -> Result<(CutoffMatrix, usize)> {
        let mut s = start;
        let mut residual = f64::INFINITY;
        for i in 1..=max_iterations {
            let (next, _) = self.apply(&s)?;
            residual = next.sup_distance(&s);
            s = next;
            if residual <= tol {
                return Ok((s, i));
            }
        }
        Err(Error::NoConvergence {
            iterations: max_iterations,
            residual,
        })
    }
}

fn check_shape(economy: &MultiAuthorityEconomy, cutoffs: &CutoffMatrix) -> Result<()> {
    if cutoffs.groups() != economy.groups() || cutoffs.authorities() != economy.authority_count() {
        return Err(Error::invalid("cutoff matrix does not match the market"));
    }
    Ok(())
}

/// Every authority's market-clearing optimal-APM cutoffs against the pool
/// left by the other authorities' cutoffs.
pub fn t_map(economy: &MultiAuthorityEconomy, cutoffs: &CutoffMatrix) -> Result<CutoffMatrix> {
    Ok(TMap::new(economy)?.apply(cutoffs)?.0)
}

/// Outcome at one authority under a cutoff matching.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuthoritySummary {
    pub name: String,
    pub cutoffs: Vec<f64>,
    /// Admitted mass of each group.
    pub x: Vec<f64>,
    pub score_index: f64,
    pub utility: f64,
    /// Applicants fell short of capacity, so all were admitted.
    pub unfillable: bool,
}

pub(crate) fn evaluate(pool: &ContinuumEconomy, prefs: &Preferences, column: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    let x: Vec<f64> = column
        .iter()
        .enumerate()
        .map(|(m, &s)| pool.mass_above(GroupId(m), s))
        .collect();
    let h = |s: f64| prefs.h().eval(s);
    let score: f64 = column
        .iter()
        .enumerate()
        .map(|(m, &s)| pool.score_above(GroupId(m), s, &h))
        .sum();
    let u = prefs.utility(score, &x)?;
    Ok((x, score, u))
}

/// Admitted measures, score index and utility of every authority.
pub fn authority_summaries(economy: &MultiAuthorityEconomy, cutoffs: &CutoffMatrix) -> Result<Vec<AuthoritySummary>> {
    check_shape(economy, cutoffs)?;
    economy
        .authorities()
        .iter()
        .enumerate()
        .map(|(c, a)| {
            let pool = economy.induced_economy(c, cutoffs)?;
            let column = cutoffs.column(c);
            let (x, score_index, utility) = evaluate(&pool, &a.prefs, &column)?;
            Ok(AuthoritySummary {
                name: a.name.clone(),
                unfillable: pool.total_mass() < a.capacity * (1.0 - 1e-12),
                cutoffs: column,
                x,
                score_index,
                utility,
            })
        })
        .collect()
}

/// Sum of the authorities' utilities.
pub fn total_welfare(economy: &MultiAuthorityEconomy, cutoffs: &CutoffMatrix) -> Result<f64> {
    Ok(authority_summaries(economy, cutoffs)?.iter().map(|s| s.utility).sum())
}

/// The stable cutoff matching and its uniqueness certificate.
#[derive(Debug, Clone, Serialize)]
pub struct StableMatching {
    pub cutoffs: CutoffMatrix,
    /// Limit of the iteration started from all cutoffs at 1.
    pub from_above: CutoffMatrix,
    /// Limit of the iteration started from all cutoffs at 0.
    pub from_below: CutoffMatrix,
    pub iterations_from_above: usize,
    pub iterations_from_below: usize,
    /// Sup distance between the two limits.
    pub gap: f64,
    pub summaries: Vec<AuthoritySummary>,
    pub welfare: f64,
    pub warnings: Vec<String>,
}

/// Iterates the best-response map downward from all-ones and upward from
/// all-zeros and certifies that both limits agree.
pub fn stable_matching(economy: &MultiAuthorityEconomy) -> Result<StableMatching> {
    stable_matching_with(economy, STABLE_TOL, MAX_ITERATIONS)
}

pub fn stable_matching_with(economy: &MultiAuthorityEconomy, tol: f64, max_iterations: usize) -> Result<StableMatching> {
    let t = TMap::new(economy)?;
    let (g, n) = (economy.groups(), economy.authority_count());
    let (from_above, iterations_from_above) = t.iterate(CutoffMatrix::filled(g, n, 1.0), tol, max_iterations)?;
    let (from_below, iterations_from_below) = t.iterate(CutoffMatrix::filled(g, n, 0.0), tol, max_iterations)?;
    let gap = from_above.sup_distance(&from_below);
    if gap > 10.0 * tol.max(STABLE_TOL) {
        return Err(Error::Integrity(format!(
            "upward and downward iterations stop {gap:e} apart; the stable matching is not unique on this grid"
        )));
    }
    let summaries = authority_summaries(economy, &from_above)?;
    let welfare = summaries.iter().map(|s| s.utility).sum();
    Ok(StableMatching {
        cutoffs: from_above.clone(),
        from_above,
        from_below,
        iterations_from_above,
        iterations_from_below,
        gap,
        summaries,
        welfare,
        warnings: support_warnings(economy),
    })
}

fn support_warnings(economy: &MultiAuthorityEconomy) -> Vec<String> {
    match economy.population() {
        Population::Grid { density, .. } => {
            let holes = density.iter().flatten().flatten().filter(|&&f| f == 0.0).count();
            if holes > 0 {
                vec![format!(
                    "{holes} grid cells carry no mass; uniqueness is only guaranteed under full support"
                )]
            } else {
                Vec::new()
            }
        }
        Population::Sample { .. } => vec!["sampled types do not have full support".into()],
    }
}

/// A way in which a cutoff matching fails to be stable.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    /// More agents clear the authority than it can hold.
    Overfilled { authority: usize, admitted: f64, capacity: f64 },
    /// Capacity is left over while willing agents are turned away.
    Unfilled {
        authority: usize,
        admitted: f64,
        capacity: f64,
        willing: f64,
    },
    /// Swapping the admitted tail of one group for the rejected head of
    /// another raises the authority's utility.
    Blocking {
        authority: usize,
        removed_group: usize,
        added_group: usize,
        gain: f64,
    },
}

/// Result of a stability check.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    /// Blocking mass used for the swaps.
    pub epsilon: f64,
    pub violations: Vec<Violation>,
    /// Largest swap gain found, negative when every swap hurts.
    pub max_gain: f64,
}

impl StabilityReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

const FILL_TOL: f64 = 1e-7;

/// Checks capacity fill and searches for blocking swaps.
///
/// Cutoff matchings are fair within groups by construction, since every
/// agent takes its favourite authority among those whose cutoff it clears.
/// `epsilon` is the swapped mass as a fraction of the total agent mass;
/// swaps exchange the lowest admitted agents of one group for the highest
/// rejected applicants of another.
pub fn verify_stability(economy: &MultiAuthorityEconomy, cutoffs: &CutoffMatrix, epsilon: f64) -> Result<StabilityReport> {
    check_shape(economy, cutoffs)?;
    if !(epsilon > 0.0) {
        return Err(Error::invalid("blocking mass must be positive"));
    }
    let eps = epsilon * economy.agent_mass();
    let mut violations = Vec::new();
    let mut max_gain = f64::NEG_INFINITY;
    for (c, a) in economy.authorities().iter().enumerate() {
        let pool = economy.induced_economy(c, cutoffs)?;
        let column = cutoffs.column(c);
        let (x, _, base) = evaluate(&pool, &a.prefs, &column)?;
        let admitted: f64 = x.iter().sum();
        let willing = pool.total_mass() - admitted;
        if admitted > a.capacity + FILL_TOL {
            violations.push(Violation::Overfilled {
                authority: c,
                admitted,
                capacity: a.capacity,
            });
        } else if admitted < a.capacity - FILL_TOL && willing > FILL_TOL {
            violations.push(Violation::Unfilled {
                authority: c,
                admitted,
                capacity: a.capacity,
                willing,
            });
        }
        let g = economy.groups();
        for out in 0..g {
            if x[out] < eps {
                continue;
            }
            for inn in 0..g {
                if inn == out || pool.group_mass(GroupId(inn)) - x[inn] < eps {
                    continue;
                }
                let mut swapped = column.clone();
                swapped[out] = pool.cutoff_for_mass(GroupId(out), x[out] - eps);
                swapped[inn] = pool.cutoff_for_mass(GroupId(inn), x[inn] + eps);
                let (_, _, u) = evaluate(&pool, &a.prefs, &swapped)?;
                let gain = u - base;
                max_gain = max_gain.max(gain);
                if gain > 1e-10 * (1.0 + base.abs()) {
                    violations.push(Violation::Blocking {
                        authority: c,
                        removed_group: out,
                        added_group: inn,
                        gain,
                    });
                }
            }
        }
    }
    Ok(StabilityReport {
        epsilon: eps,
        violations,
        max_gain,
    })
}
