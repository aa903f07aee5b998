use super::apm::{optimal_apm, run_apm_greedy};
use super::priority::{PriorityPolicy, PriorityRule};
use super::quota::QuotaPolicy;
use crate::economy::{ContinuumEconomy, CutoffAllocation};
use crate::error::{Error, Result};
use crate::preferences::{Preferences, ScoreTransform};

/// Optimal priority and quota policies for a single known state.
#[derive(Debug, Clone)]
pub struct StateEquivalents {
    /// `P(s, m) = h(s) + u_m'(x*_m)`: the optimal adaptive priority frozen at
    /// the optimum.
    pub priority: PriorityPolicy,
    /// `Q_m = x*_m`, reserves first.
    pub quota: QuotaPolicy,
    /// The optimal allocation both policies reproduce.
    pub optimum: CutoffAllocation,
}

/// Without uncertainty, the optimal allocation is implemented by both a
/// priority and a quota policy.
pub fn no_uncertainty_equivalents(economy: &ContinuumEconomy, prefs: &Preferences) -> Result<StateEquivalents> {
    let apm = optimal_apm(prefs)?;
    let optimum = run_apm_greedy(&apm, economy)?;
    let us = prefs.separable()?;
    let boosts: Vec<f64> = us
        .iter()
        .zip(optimum.x())
        .map(|(u, &x)| u.derivative(x))
        .collect();
    let priority = if boosts.iter().all(|b| b.is_finite()) {
        match prefs.h() {
            ScoreTransform::Identity => PriorityPolicy::boosts(boosts),
            h => PriorityPolicy::new(
                PriorityRule::Transformed {
                    h: h.clone(),
                    boosts,
                },
                us.len(),
            )?,
        }
    } else {
        // An infinite marginal value only arises for a group with nothing
        // admitted below an Inada kink; rank it above everyone instead.
        let cap = boosts.iter().copied().filter(|b| b.is_finite()).fold(0.0, f64::max) + prefs.h().range() + 1.0;
        let boosts = boosts.into_iter().map(|b| b.min(cap)).collect();
        PriorityPolicy::new(
            PriorityRule::Transformed {
                h: prefs.h().clone(),
                boosts,
            },
            us.len(),
        )?
    };
    let total: f64 = optimum.x().iter().sum();
    // Absorb rounding so the reserves never exceed capacity.
    let scale = if total > economy.capacity() {
        economy.capacity() / total
    } else {
        1.0
    };
    let quota = QuotaPolicy::reserves_first(optimum.x().iter().map(|x| x * scale).collect(), economy.capacity())?;
    Ok(StateEquivalents {
        priority,
        quota,
        optimum,
    })
}

/// The priority policy that reproduces a quota allocation with per-group
/// cutoffs `s_m`: `P(s, m) = s + (max_n s_n - s_m)`.
///
/// Every group's cutoff is lifted to the common threshold `max_n s_n`, so
/// admitted agents outrank rejected ones across groups.
pub fn priority_from_cutoffs(cutoffs: &[f64]) -> PriorityPolicy {
    let top = cutoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    PriorityPolicy::boosts(cutoffs.iter().map(|s| top - s).collect())
}

/// Result of the equivalent-subsidy calculation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalentSubsidy {
    /// Common lottery cutoff on the `[0, 100]` scale.
    pub cutoff: f64,
    /// Additive boost for eligible applicants.
    pub alpha: f64,
}

/// Boost for eligible applicants that reproduces a given number of
/// eligible admissions under a uniform lottery on `[0, 100]`.
///
/// General applicants clear at `c`, eligible ones hold scores on
/// `[α, 100 + α]`; the two market-clearing conditions
/// `general = n_g (100 - c) / 100` and `eligible = n_e (100 + α - c) / 100`
/// are solved in closed form. When every eligible applicant is admitted the
/// smallest such boost is returned.
pub fn equivalent_subsidy(
    n_general: f64,
    n_eligible: f64,
    visas: f64,
    eligible_admitted: f64,
) -> Result<EquivalentSubsidy> {
    if !(n_general > 0.0 && n_eligible > 0.0 && visas > 0.0 && eligible_admitted >= 0.0) {
        return Err(Error::invalid("applicant and visa counts must be positive"));
    }
    if eligible_admitted > n_eligible.min(visas) {
        return Err(Error::invalid(format!(
            "eligible admissions {eligible_admitted} exceed min(eligible pool, visas)"
        )));
    }
    let general = visas - eligible_admitted;
    if general > n_general {
        return Err(Error::invalid(format!(
            "{general} general admissions exceed the general pool {n_general}"
        )));
    }
    let cutoff = 100.0 * (1.0 - general / n_general);
    let alpha = cutoff - 100.0 + 100.0 * eligible_admitted / n_eligible;
    Ok(EquivalentSubsidy { cutoff, alpha })
}
