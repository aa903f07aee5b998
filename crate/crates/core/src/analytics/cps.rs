//! Reserve payoffs and moment conditions for a tiered reserve system.
//!
//! Open seats are filled by merit first, then every tier's reserve takes
//! the best remaining students of that tier. The authority values the
//! average admitted score on a native scale (0 to 900 by default) plus a
//! loss in each tier's admitted share. Reserve sizes are shares of
//! capacity.

use serde::{Deserialize, Serialize};

use crate::economy::{Belief, ContinuumEconomy, CutoffAllocation, GroupId};
use crate::error::{Error, Result};
use crate::mechanisms::{optimal_apm, run_apm_greedy, run_quota, QuotaPolicy};
use crate::preferences::{DiversityUtility, Preferences, ScoreTransform};

/// Top of the native score scale.
pub const CPS_SCORE_SCALE: f64 = 900.0;
/// Default reserve-derivative step, as a share of capacity.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Which loss function the tiers' shares enter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CpsFamily {
    /// `β |x/q - 0.25|^γ` per tier; parameters `[β, γ]`.
    Cps,
    /// `β max(0, 0.25 - x/q)^γ`; parameters `[β, γ]`.
    CpsUnderrepOnly,
    /// Separate coefficients below and above the target; parameters
    /// `[β_low, β_high, γ]`.
    CpsAsymmetric,
    /// Same loss as `Cps`, identified from a common change in every
    /// reserve; parameters `[β, γ]`.
    CpsHomogeneous,
}

impl CpsFamily {
    pub fn parameter_names(&self) -> &'static [&'static str] {
        match self {
            CpsFamily::CpsAsymmetric => &["beta_low", "beta_high", "gamma"],
            _ => &["beta", "gamma"],
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_names().len()
    }

    pub fn name(&self) -> &'static str {
        match self {
            CpsFamily::Cps => "cps",
            CpsFamily::CpsUnderrepOnly => "cps-underrep-only",
            CpsFamily::CpsAsymmetric => "cps-asymmetric",
            CpsFamily::CpsHomogeneous => "cps-homogeneous",
        }
    }

    /// Per-tier utilities for `params`; no concavity check.
    pub fn utilities(&self, params: &[f64], capacity: f64, tiers: usize) -> Result<Vec<DiversityUtility>> {
        if params.len() != self.parameter_count() {
            return Err(Error::invalid(format!(
                "{} takes {} parameters, got {}",
                self.name(),
                self.parameter_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        let u = match self {
            CpsFamily::Cps | CpsFamily::CpsHomogeneous => DiversityUtility::Cps {
                beta: params[0],
                gamma: params[1],
                capacity,
            },
            CpsFamily::CpsUnderrepOnly => DiversityUtility::CpsUnderrep {
                beta: params[0],
                gamma: params[1],
                capacity,
            },
            CpsFamily::CpsAsymmetric => DiversityUtility::CpsAsymmetric {
                beta_low: params[0],
                beta_high: params[1],
                gamma: params[2],
                capacity,
            },
        };
        Ok(vec![u; tiers])
    }
}

/// Admitted measure per tier and the integral of raw scores over the
/// admitted set, for one state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateAllocation {
    pub x: Vec<f64>,
    pub score_sum: f64,
    pub cutoffs: Vec<f64>,
}

impl StateAllocation {
    fn of(economy: &ContinuumEconomy, alloc: &CutoffAllocation) -> Self {
        StateAllocation {
            x: alloc.x().to_vec(),
            score_sum: alloc.score_index(economy, &|s| s),
            cutoffs: alloc.cutoffs().to_vec(),
        }
    }

    /// Tier shares of capacity.
    pub fn shares(&self, capacity: f64) -> Vec<f64> {
        self.x.iter().map(|x| x / capacity).collect()
    }
}

/// A belief over yearly tier score distributions with a common capacity.
#[derive(Debug, Clone)]
pub struct CpsModel {
    states: Vec<(ContinuumEconomy, f64)>,
    capacity: f64,
    tiers: usize,
    score_scale: f64,
}

impl CpsModel {
    pub fn new(states: Vec<(ContinuumEconomy, f64)>, score_scale: f64) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("need at least one year"));
        }
        if !(score_scale > 0.0) {
            return Err(Error::invalid("score scale must be positive"));
        }
        let capacity = states[0].0.capacity();
        let tiers = states[0].0.groups();
        for (i, (e, w)) in states.iter().enumerate() {
            if e.capacity() != capacity || e.groups() != tiers {
                return Err(Error::invalid(format!(
                    "year {i} differs in capacity or tier count from the first year"
                )));
            }
            if !(*w > 0.0) {
                return Err(Error::invalid("year weights must be positive"));
            }
        }
        let total: f64 = states.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("year weights sum to {total}, not 1")));
        }
        Ok(CpsModel {
            states,
            capacity,
            tiers,
            score_scale,
        })
    }

    /// Uses the continuum states of a belief.
    pub fn from_belief(belief: &Belief, score_scale: f64) -> Result<Self> {
        let states = belief
            .states()
            .iter()
            .map(|(e, w)| {
                e.as_continuum()
                    .cloned()
                    .map(|c| (c, *w))
                    .ok_or_else(|| Error::invalid("reserve estimation needs binned continuum years"))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(states, score_scale)
    }

    pub fn states(&self) -> &[(ContinuumEconomy, f64)] {
        &self.states
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn tiers(&self) -> usize {
        self.tiers
    }

    pub fn score_scale(&self) -> f64 {
        self.score_scale
    }

    /// `h(s) = scale · s / q`, so the score index is the average admitted
    /// score on the native scale.
    pub fn score_transform(&self) -> ScoreTransform {
        ScoreTransform::Affine {
            scale: self.score_scale / self.capacity,
            offset: 0.0,
        }
    }

    /// Validated preferences; fails when the utilities are not concave.
    pub fn preferences(&self, family: CpsFamily, params: &[f64]) -> Result<Preferences> {
        Preferences::new(self.score_transform(), family.utilities(params, self.capacity, self.tiers)?)
    }

    /// Checks shares: each in `[0, 1]`, total at most 1.
    pub fn check_reserves(&self, reserves: &[f64]) -> Result<()> {
        if reserves.len() != self.tiers {
            return Err(Error::invalid(format!("need {} reserve shares", self.tiers)));
        }
        if reserves.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::invalid("reserve shares must lie in [0, 1]"));
        }
        let total: f64 = reserves.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::invalid(format!("reserve shares total {total} exceed 1")));
        }
        Ok(())
    }

    /// Merit-first reserve policy for the given shares.
    pub fn policy(&self, reserves: &[f64]) -> Result<QuotaPolicy> {
        self.check_reserves(reserves)?;
        QuotaPolicy::residual_first(reserves.iter().map(|r| r * self.capacity).collect(), self.capacity)
    }

    pub fn reserve_allocations(&self, reserves: &[f64]) -> Result<Vec<StateAllocation>> {
        let policy = self.policy(reserves)?;
        self.states
            .iter()
            .enumerate()
            .map(|(i, (e, _))| {
                run_quota(&policy, e)
                    .map(|a| StateAllocation::of(e, &a))
                    .map_err(|err| Error::in_state(i, err))
            })
            .collect()
    }

    /// Allocations of the optimal adaptive priority for `params`.
    pub fn apm_allocations(&self, family: CpsFamily, params: &[f64]) -> Result<Vec<StateAllocation>> {
        let apm = optimal_apm(&self.preferences(family, params)?)?;
        self.states
            .iter()
            .enumerate()
            .map(|(i, (e, _))| {
                run_apm_greedy(&apm, e)
                    .map(|a| StateAllocation::of(e, &a))
                    .map_err(|err| Error::in_state(i, err))
            })
            .collect()
    }

    /// Utility of one state's allocation.
    pub fn state_utility(&self, alloc: &StateAllocation, utilities: &[DiversityUtility]) -> f64 {
        let score = self.score_scale * alloc.score_sum / self.capacity;
        score + utilities.iter().zip(&alloc.x).map(|(u, &x)| u.value(x)).sum::<f64>()
    }

    /// Expected utility of stored allocations, one per state.
    pub fn payoff_of(&self, allocs: &[StateAllocation], family: CpsFamily, params: &[f64]) -> Result<f64> {
        let u = family.utilities(params, self.capacity, self.tiers)?;
        Ok(self
            .states
            .iter()
            .zip(allocs)
            .map(|((_, w), a)| w * self.state_utility(a, &u))
            .sum())
    }

    /// Expected loss term `Σ_t u_t(x_t)` of stored allocations.
    pub fn diversity_term(&self, allocs: &[StateAllocation], family: CpsFamily, params: &[f64]) -> Result<f64> {
        let u = family.utilities(params, self.capacity, self.tiers)?;
        Ok(self
            .states
            .iter()
            .zip(allocs)
            .map(|((_, w), a)| w * u.iter().zip(&a.x).map(|(u, &x)| u.value(x)).sum::<f64>())
            .sum())
    }

    /// Expected payoff of the merit-first reserve policy.
    pub fn reserve_payoff(&self, reserves: &[f64], family: CpsFamily, params: &[f64]) -> Result<f64> {
        self.payoff_of(&self.reserve_allocations(reserves)?, family, params)
    }

    /// Mean admitted score per tier on the native scale in each state.
    pub fn tier_scores(&self, allocs: &[StateAllocation]) -> Vec<Vec<f64>> {
        self.states
            .iter()
            .zip(allocs)
            .map(|((e, _), a)| {
                (0..self.tiers)
                    .map(|t| {
                        let g = GroupId(t);
                        if a.x[t] <= 0.0 {
                            return f64::NAN;
                        }
                        let mass = e.mass_above(g, a.cutoffs[t]).max(a.x[t]);
                        self.score_scale * e.score_above(g, a.cutoffs[t], &|s| s) / mass
                    })
                    .collect()
            })
            .collect()
    }
}

/// `reserve_payoff` on a belief of binned years.
pub fn reserve_payoff(
    belief: &Belief,
    reserves: &[f64],
    family: CpsFamily,
    params: &[f64],
    score_scale: f64,
) -> Result<f64> {
    CpsModel::from_belief(belief, score_scale)?.reserve_payoff(reserves, family, params)
}

/// Allocations around the observed reserves along one direction.
#[derive(Debug, Clone)]
struct Direction {
    step: f64,
    plus: Vec<StateAllocation>,
    minus: Vec<StateAllocation>,
    /// Allocations at half the step, kept when the payoff bends sharply.
    half: Option<(Vec<StateAllocation>, Vec<StateAllocation>)>,
}

/// Central-difference derivatives of the reserve payoff, with every
/// allocation they need computed once. Allocations do not depend on the
/// preference parameters, so moments for any parameters are cheap.
#[derive(Debug, Clone)]
pub struct MomentPlan {
    model: CpsModel,
    family: CpsFamily,
    reserves: Vec<f64>,
    directions: Vec<Direction>,
    warnings: Vec<String>,
}

fn allocation_slope(plus: &[StateAllocation], minus: &[StateAllocation], step: f64) -> Vec<f64> {
    plus.iter()
        .zip(minus)
        .flat_map(|(p, m)| {
            p.x.iter()
                .zip(&m.x)
                .map(|(a, b)| a - b)
                .chain(std::iter::once(p.score_sum - m.score_sum))
                .collect::<Vec<_>>()
        })
        .map(|d| d / (2.0 * step))
        .collect()
}

impl MomentPlan {
    pub fn new(model: CpsModel, family: CpsFamily, reserves: Vec<f64>, step: f64) -> Result<Self> {
        model.check_reserves(&reserves)?;
        if !(step > 0.0) {
            return Err(Error::invalid("the derivative step must be positive"));
        }
        let tiers = model.tiers();
        let vectors: Vec<Vec<f64>> = if family == CpsFamily::CpsHomogeneous {
            vec![vec![1.0; tiers]]
        } else {
            (0..tiers)
                .map(|i| (0..tiers).map(|j| f64::from(u8::from(i == j))).collect())
                .collect()
        };
        let mut warnings = Vec::new();
        let mut directions = Vec::with_capacity(vectors.len());
        for (k, v) in vectors.iter().enumerate() {
            let mut h = step;
            let shifted = |h: f64, sign: f64| -> Vec<f64> { reserves.iter().zip(v).map(|(r, d)| r + sign * h * d).collect() };
            let feasible = |h: f64| model.check_reserves(&shifted(h, 1.0)).is_ok() && model.check_reserves(&shifted(h, -1.0)).is_ok();
            while !feasible(h) {
                h /= 2.0;
                if h < 1e-9 {
                    return Err(Error::invalid(format!(
                        "reserves sit on the feasibility boundary along direction {k}"
                    )));
                }
            }
            if h < step {
                warnings.push(format!("direction {k}: step shrunk to {h:e} to stay feasible"));
            }
            let plus = model.reserve_allocations(&shifted(h, 1.0))?;
            let minus = model.reserve_allocations(&shifted(h, -1.0))?;
            let half_plus = model.reserve_allocations(&shifted(h / 2.0, 1.0))?;
            let half_minus = model.reserve_allocations(&shifted(h / 2.0, -1.0))?;
            let coarse = allocation_slope(&plus, &minus, h);
            let fine = allocation_slope(&half_plus, &half_minus, h / 2.0);
            let bent = coarse
                .iter()
                .zip(&fine)
                .any(|(a, b)| (a - b).abs() > 1e-3 * b.abs().max(model.capacity()));
            let half = if bent {
                warnings.push(format!("direction {k}: payoff bends within the step; using Richardson extrapolation"));
                Some((half_plus, half_minus))
            } else {
                None
            };
            directions.push(Direction { step: h, plus, minus, half });
        }
        Ok(MomentPlan {
            model,
            family,
            reserves,
            directions,
            warnings,
        })
    }

    pub fn model(&self) -> &CpsModel {
        &self.model
    }

    pub fn family(&self) -> CpsFamily {
        self.family
    }

    pub fn reserves(&self) -> &[f64] {
        &self.reserves
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Directional derivatives of the expected payoff at the observed
    /// reserves: one per tier, or one along the common direction for the
    /// homogeneous family.
    pub fn derivatives(&self, params: &[f64]) -> Result<Vec<f64>> {
        let m = &self.model;
        self.directions
            .iter()
            .map(|d| {
                let coarse = (m.payoff_of(&d.plus, self.family, params)? - m.payoff_of(&d.minus, self.family, params)?)
                    / (2.0 * d.step);
                Ok(match &d.half {
                    None => coarse,
                    Some((p, n)) => {
                        let fine = (m.payoff_of(p, self.family, params)? - m.payoff_of(n, self.family, params)?) / d.step;
                        (4.0 * fine - coarse) / 3.0
                    }
                })
            })
            .collect()
    }

    /// `G_ij = ∂Ξ/∂r_i - ∂Ξ/∂r_j` for `i < j`, or the single common
    /// derivative for the homogeneous family.
    pub fn moments(&self, params: &[f64]) -> Result<Vec<f64>> {
        let d = self.derivatives(params)?;
        if self.family == CpsFamily::CpsHomogeneous {
            return Ok(d);
        }
        let mut g = Vec::with_capacity(d.len() * (d.len() - 1) / 2);
        for i in 0..d.len() {
            for j in i + 1..d.len() {
                g.push(d[i] - d[j]);
            }
        }
        Ok(g)
    }

    /// `Σ G²`.
    pub fn objective(&self, params: &[f64]) -> Result<f64> {
        Ok(self.moments(params)?.iter().map(|g| g * g).sum())
    }
}

/// Moments of `family` at `params` for the observed reserves.
pub fn moment_vector(
    model: &CpsModel,
    reserves: &[f64],
    family: CpsFamily,
    params: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    MomentPlan::new(model.clone(), family, reserves.to_vec(), step)?.moments(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric_model() -> CpsModel {
        let years = (0..3)
            .map(|y| {
                let tilt = 1.0 + y as f64;
                let e = ContinuumEconomy::from_fn(4, 400, 0.1, |_, s| 0.25 * tilt * (tilt * s).exp() / (tilt.exp() - 1.0))
                    .unwrap();
                (e, 1.0 / 3.0)
            })
            .collect();
        CpsModel::new(years, CPS_SCORE_SCALE).unwrap()
    }

    #[test]
    fn zero_reserves_give_the_merit_payoff() {
        let m = symmetric_model();
        let merit = m.reserve_payoff(&[0.0; 4], CpsFamily::Cps, &[0.0, 2.0]).unwrap();
        let avg: f64 = m
            .states()
            .iter()
            .map(|(e, w)| {
                let c = e.cutoff_for_mass(GroupId(0), 0.025);
                w * CPS_SCORE_SCALE * 4.0 * e.score_above(GroupId(0), c, &|s| s) / 0.1
            })
            .sum();
        assert!((merit - avg).abs() < 1e-6);
    }

    #[test]
    fn symmetric_beliefs_give_zero_moments() {
        let m = symmetric_model();
        let g = moment_vector(&m, &[0.175; 4], CpsFamily::Cps, &[-200.0, 2.0], DEFAULT_STEP).unwrap();
        assert_eq!(g.len(), 6);
        assert!(g.iter().all(|v| v.abs() < 1e-8), "{g:?}");
    }

    #[test]
    fn payoff_is_symmetric_under_permuted_reserves() {
        let m = symmetric_model();
        let a = m.reserve_payoff(&[0.1, 0.2, 0.15, 0.05], CpsFamily::Cps, &[-150.0, 2.0]).unwrap();
        let b = m.reserve_payoff(&[0.05, 0.15, 0.2, 0.1], CpsFamily::Cps, &[-150.0, 2.0]).unwrap();
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn steps_shrink_near_the_boundary() {
        let m = symmetric_model();
        let plan = MomentPlan::new(m, CpsFamily::Cps, vec![0.0005, 0.2, 0.2, 0.2], DEFAULT_STEP).unwrap();
        assert!(plan.warnings().iter().any(|w| w.contains("shrunk")));
        assert!(MomentPlan::new(symmetric_model(), CpsFamily::Cps, vec![0.0, 0.2, 0.2, 0.2], DEFAULT_STEP).is_err());
    }

    #[test]
    fn rejects_infeasible_reserves() {
        let m = symmetric_model();
        assert!(m.reserve_payoff(&[0.5, 0.5, 0.1, 0.0], CpsFamily::Cps, &[-1.0, 2.0]).is_err());
    }
}
