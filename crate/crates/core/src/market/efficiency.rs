//! Utilitarian efficiency across authorities.

use serde::Serialize;

use super::stable::stable_matching;
use super::{MultiAuthorityEconomy, Population};
use crate::economy::{ContinuumEconomy, GroupId};
use crate::error::{Error, Result};
use crate::mechanisms::continuum_optimum_by;
use crate::preferences::{Diversity, DiversityUtility, ScoreTransform};

/// Residual bound of the dual ascent.
pub const DUAL_TOL: f64 = 1e-8;

const MAX_SWEEPS: usize = 100_000;

/// Optimal split of aggregate admissions across authorities.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateValue {
    /// `ũ(y) = max Σ u_{m,c}(x_{m,c})`.
    pub value: f64,
    /// Price of each group's row constraint, the marginal value of `y_m`.
    pub lambda: Vec<f64>,
    /// Price of each authority's capacity.
    pub gamma: Vec<f64>,
    /// `table[m][c] = x_{m,c}`.
    pub table: Vec<Vec<f64>>,
    /// Largest violation of feasibility or complementary slackness.
    pub kkt_residual: f64,
    pub sweeps: usize,
}

/// `x` with `u'(x) = p`, capped at `upper`.
fn demand_at(u: &DiversityUtility, p: f64, upper: f64) -> f64 {
    u.derivative_inverse(p, upper)
}

/// Price in `[0, ∞)` that brings `Σ_k demand(p + shift_k)` down to
/// `target`, or 0 when the constraint is slack at price 0.
fn clearing_price(utilities: &[&DiversityUtility], shifts: &[f64], target: f64, upper: f64) -> f64 {
    let total = |p: f64| -> f64 {
        utilities
            .iter()
            .zip(shifts)
            .map(|(u, &s)| demand_at(u, p + s, upper))
            .sum()
    };
    if total(0.0) <= target {
        return 0.0;
    }
    let mut hi = 1.0;
    while total(hi) > target {
        hi *= 2.0;
        if hi > 1e300 {
            return hi;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Splits aggregate admissions `y` across authorities to maximize the
/// summed diversity utility, subject to `Σ_c x_{m,c} <= y_m` and
/// `Σ_m x_{m,c} <= q_c`.
///
/// `utilities[c][m]` is authority `c`'s utility for group `m`; every one
/// must be strictly concave with infinite slope at zero. Solved by cyclic
/// dual coordinate ascent: given prices, `x_{m,c} = (u'_{m,c})^{-1}(λ_m + γ_c)`,
/// and each price in turn is set to clear its own constraint. When rows
/// and columns both bind, prices are only pinned up to a common shift; the
/// smallest authority price is then normalized to zero.
pub fn aggregate_diversity_value(
    capacities: &[f64],
    utilities: &[Vec<DiversityUtility>],
    y: &[f64],
) -> Result<AggregateValue> {
    let n = capacities.len();
    let g = y.len();
    if n == 0 || g == 0 || utilities.len() != n || utilities.iter().any(|u| u.len() != g) {
        return Err(Error::invalid("need one utility per authority and group"));
    }
    if capacities.iter().any(|&q| !(q > 0.0)) || y.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::invalid("capacities must be positive and aggregates nonnegative"));
    }
    for (c, us) in utilities.iter().enumerate() {
        for (m, u) in us.iter().enumerate() {
            if !u.derivative(0.0).is_infinite() {
                return Err(Error::invalid(format!(
                    "utility of authority {c} for group {m} needs infinite slope at zero"
                )));
            }
        }
    }
    let upper = capacities.iter().sum::<f64>() + y.iter().sum::<f64>();
    let mut lambda = vec![0.0; g];
    let mut gamma = vec![0.0; n];
    let table = |lambda: &[f64], gamma: &[f64]| -> Vec<Vec<f64>> {
        (0..g)
            .map(|m| {
                (0..n)
                    .map(|c| {
                        if y[m] == 0.0 {
                            0.0
                        } else {
                            demand_at(&utilities[c][m], lambda[m] + gamma[c], upper)
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let residual = |x: &[Vec<f64>], lambda: &[f64], gamma: &[f64]| -> f64 {
        let mut r: f64 = 0.0;
        for m in 0..g {
            let row: f64 = x[m].iter().sum();
            r = r.max((row - y[m]).max(0.0));
            if lambda[m] > 0.0 {
                r = r.max((row - y[m]).abs());
            }
        }
        for c in 0..n {
            let col: f64 = (0..g).map(|m| x[m][c]).sum();
            r = r.max((col - capacities[c]).max(0.0));
            if gamma[c] > 0.0 {
                r = r.max((col - capacities[c]).abs());
            }
        }
        r
    };
    let mut sweeps = 0;
    let mut r = f64::INFINITY;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        for m in 0..g {
            if y[m] == 0.0 {
                lambda[m] = 0.0;
                continue;
            }
            let us: Vec<&DiversityUtility> = (0..n).map(|c| &utilities[c][m]).collect();
            lambda[m] = clearing_price(&us, &gamma, y[m], upper);
        }
        for c in 0..n {
            let rows: Vec<usize> = (0..g).filter(|&m| y[m] > 0.0).collect();
            let us: Vec<&DiversityUtility> = rows.iter().map(|&m| &utilities[c][m]).collect();
            let shifts: Vec<f64> = rows.iter().map(|&m| lambda[m]).collect();
            gamma[c] = clearing_price(&us, &shifts, capacities[c], upper);
        }
        r = residual(&table(&lambda, &gamma), &lambda, &gamma);
        if r < DUAL_TOL * 1e-2 {
            break;
        }
    }
    if r >= DUAL_TOL {
        return Err(Error::NoConvergence {
            iterations: sweeps,
            residual: r,
        });
    }
    let x = table(&lambda, &gamma);
    let rows_bind = (0..g).all(|m| (x[m].iter().sum::<f64>() - y[m]).abs() < DUAL_TOL);
    let shift = gamma.iter().copied().fold(f64::INFINITY, f64::min);
    if rows_bind && shift > 0.0 {
        lambda.iter_mut().zip(y).filter(|(_, &v)| v > 0.0).for_each(|(l, _)| *l += shift);
        gamma.iter_mut().for_each(|v| *v -= shift);
    }
    let value = (0..g)
        .flat_map(|m| (0..n).map(move |c| (m, c)))
        .map(|(m, c)| utilities[c][m].value(x[m][c]))
        .sum();
    Ok(AggregateValue {
        value,
        kkt_residual: residual(&x, &lambda, &gamma),
        lambda,
        gamma,
        table: x,
        sweeps,
    })
}

/// The efficient centralized rule: one aggregate adaptive priority over all
/// seats, with authority-specific quota functions splitting the admitted
/// agents.
#[derive(Debug, Clone, Serialize)]
pub struct ApmQPolicy {
    pub capacities: Vec<f64>,
    /// `utilities[c][m]`.
    pub utilities: Vec<Vec<DiversityUtility>>,
    pub h: ScoreTransform,
    /// Aggregate admissions the rule implements.
    pub y: Vec<f64>,
    /// Dual prices at `y`.
    pub lambda: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ApmQPolicy {
    /// Aggregate priority `h(s) + ũ^{(m)}(y)`.
    pub fn rank(&self, m: usize, y: &[f64], s: f64) -> Result<f64> {
        let v = aggregate_diversity_value(&self.capacities, &self.utilities, y)?;
        Ok(self.h.eval(s) + v.lambda[m])
    }

    /// Quota table `Q_{m,c}(y) = (u'_{m,c})^{-1}(λ_m + γ_c)`.
    pub fn quotas(&self, y: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(aggregate_diversity_value(&self.capacities, &self.utilities, y)?.table)
    }
}

/// Result of the efficient centralized allocation.
#[derive(Debug, Clone, Serialize)]
pub struct ApmQOutcome {
    pub policy: ApmQPolicy,
    /// Aggregate cutoff of each group.
    pub cutoffs: Vec<f64>,
    /// Aggregate priority `h(s_m) + λ_m` at each group's cutoff.
    pub thresholds: Vec<f64>,
    /// `table[m][c]`.
    pub table: Vec<Vec<f64>>,
    /// Score slices `[lo, hi)` of group `m` sent to authority `c`.
    pub slices: Vec<Vec<(f64, f64)>>,
    pub utilities: Vec<f64>,
    pub welfare: f64,
    pub stable_welfare: f64,
    pub kkt_residual: f64,
    /// Largest welfare gain found among sampled feasible perturbations of
    /// the aggregate; nonpositive at an optimum.
    pub best_perturbation_gain: f64,
}

fn common_h(economy: &MultiAuthorityEconomy) -> Result<ScoreTransform> {
    let first = economy.authorities()[0].prefs.h().clone();
    for a in &economy.authorities()[1..] {
        let same = (0..=64).all(|i| {
            let s = i as f64 / 64.0;
            (a.prefs.h().eval(s) - first.eval(s)).abs() <= 1e-12 * (1.0 + first.eval(s).abs())
        });
        if !same {
            return Err(Error::invalid("the efficient rule needs a score transform shared by all authorities"));
        }
    }
    Ok(first)
}

/// Aggregate density of each group over all rankings.
fn aggregate_economy(economy: &MultiAuthorityEconomy) -> Result<ContinuumEconomy> {
    let (rankings, density) = match economy.population() {
        Population::Grid { rankings, density } => (rankings, density),
        Population::Sample { .. } => {
            return Err(Error::invalid("the efficient rule needs common scores"));
        }
    };
    let n = economy.authority_count();
    for (r, ranking) in rankings.iter().enumerate() {
        let used = density.iter().any(|d| d[r].iter().any(|&f| f > 0.0));
        if used && ranking.len() != n {
            return Err(Error::invalid(
                "the efficient rule needs every agent to rank every authority above the outside option",
            ));
        }
    }
    let bins = economy.bins();
    let agg = density
        .iter()
        .map(|rows| (0..bins).map(|k| rows.iter().map(|d| d[k]).sum()).collect())
        .collect();
    ContinuumEconomy::new(agg, economy.authorities().iter().map(|a| a.capacity).sum())
}

/// Efficient allocation across authorities.
///
/// Chooses aggregate admissions `y` to maximize the total score index plus
/// `ũ(y)`, admits the top `y_m` of each group, and splits them by the
/// quota table, filling authorities in index order from the top score
/// down. Compares the result with the stable matching and with sampled
/// perturbations of `y`.
pub fn apmq_allocate(economy: &MultiAuthorityEconomy) -> Result<ApmQOutcome> {
    let h = common_h(economy)?;
    for a in economy.authorities() {
        if !matches!(a.prefs.diversity(), Diversity::Separable(_)) {
            return Err(Error::invalid("the efficient rule needs separable diversity preferences"));
        }
    }
    let agg = aggregate_economy(economy)?;
    let g = economy.groups();
    let capacities: Vec<f64> = economy.authorities().iter().map(|a| a.capacity).collect();
    let utilities: Vec<Vec<DiversityUtility>> = economy
        .authorities()
        .iter()
        .map(|a| a.prefs.separable().map(|u| u.to_vec()))
        .collect::<Result<_>>()?;
    // Validate the utilities once before the search.
    aggregate_diversity_value(&capacities, &utilities, &vec![capacities.iter().sum::<f64>() / g as f64; g])?;

    let hf = |s: f64| h.eval(s);
    let welfare_at = |y: &[f64]| -> Result<f64> {
        let score: f64 = (0..g)
            .map(|m| agg.score_above(GroupId(m), agg.cutoff_for_mass(GroupId(m), y[m]), &hf))
            .sum();
        Ok(score + aggregate_diversity_value(&capacities, &utilities, y)?.value)
    };
    let (y, welfare) = continuum_optimum_by(&agg, 1e-10, &mut |y: &[f64]| welfare_at(y))?;
    let dual = aggregate_diversity_value(&capacities, &utilities, &y)?;

    let cutoffs: Vec<f64> = (0..g).map(|m| agg.cutoff_for_mass(GroupId(m), y[m])).collect();
    let thresholds = (0..g).map(|m| h.eval(cutoffs[m]) + dual.lambda[m]).collect();
    let n = capacities.len();
    let mut slices = vec![Vec::with_capacity(n); g];
    let mut utilities_by_authority = vec![0.0; n];
    let mut scores = vec![0.0; n];
    for m in 0..g {
        let gm = GroupId(m);
        let mut taken = 0.0;
        let mut hi = 1.0;
        for c in 0..n {
            taken += dual.table[m][c];
            let lo = if c + 1 == n { cutoffs[m] } else { agg.cutoff_for_mass(gm, taken).max(cutoffs[m]) };
            scores[c] += agg.score_above(gm, lo, &hf) - agg.score_above(gm, hi, &hf);
            slices[m].push((lo, hi));
            hi = lo;
        }
    }
    for c in 0..n {
        let x: Vec<f64> = (0..g).map(|m| dual.table[m][c]).collect();
        utilities_by_authority[c] = economy.authorities()[c].prefs.utility(scores[c], &x)?;
    }

    let stable = stable_matching(economy)?;
    let mut best_gain = f64::NEG_INFINITY;
    for a in 0..g {
        for b in 0..g {
            if a == b {
                continue;
            }
            for delta in [1e-4, 1e-3, 1e-2, 5e-2] {
                if y[a] < delta || y[b] + delta > agg.group_mass(GroupId(b)) {
                    continue;
                }
                let mut z = y.clone();
                z[a] -= delta;
                z[b] += delta;
                best_gain = best_gain.max(welfare_at(&z)? - welfare);
            }
        }
    }
    let tol = 1e-9 * (1.0 + welfare.abs());
    if best_gain > tol {
        return Err(Error::Integrity(format!(
            "a perturbed aggregate improves welfare by {best_gain:e}"
        )));
    }
    if stable.welfare > welfare + tol {
        return Err(Error::Integrity(format!(
            "stable welfare {} exceeds the efficient welfare {welfare}",
            stable.welfare
        )));
    }
    Ok(ApmQOutcome {
        policy: ApmQPolicy {
            capacities,
            utilities,
            h,
            y,
            lambda: dual.lambda.clone(),
            gamma: dual.gamma.clone(),
        },
        cutoffs,
        thresholds,
        table: dual.table,
        slices,
        utilities: utilities_by_authority,
        welfare,
        stable_welfare: stable.welfare,
        kkt_residual: dual.kkt_residual,
        best_perturbation_gain: best_gain,
    })
}
