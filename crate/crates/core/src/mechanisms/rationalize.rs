use thiserror::Error;

use super::priority::{PriorityPolicy, PriorityRule};
use super::quota::QuotaPolicy;
use crate::preferences::{Diversity, DiversityUtility, Preferences, ScoreTransform};

/// Why no priority or quota policy is first-best for given preferences.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Refusal {
    #[error("diversity utility of group {group} is not linear, so no priority policy is first-best")]
    NotLinear { group: usize },
    #[error("group {group} is not extremely risk-averse, so no quota policy is first-best")]
    NotExtreme { group: usize },
    #[error("targets sum to {total}, above capacity {capacity}")]
    TargetsExceedCapacity { total: f64, capacity: f64 },
    #[error("extreme-target slope {slope} of group {group} does not dominate the score range {range}")]
    WeakTarget { group: usize, slope: f64, range: f64 },
    #[error("non-separable diversity preferences")]
    NonSeparable,
}

/// The priority policy that is first-best under every belief, which exists
/// exactly when every diversity utility is linear: `P(s, m) = h(s) + u_m'`.
///
/// With the identity transform the result is an additive boost on the raw
/// score.
pub fn rationalizing_priority(prefs: &Preferences) -> Result<PriorityPolicy, Refusal> {
    let us = match prefs.diversity() {
        Diversity::Separable(us) => us,
        Diversity::NonSeparable(_) => return Err(Refusal::NonSeparable),
    };
    let mut boosts = Vec::with_capacity(us.len());
    for (m, u) in us.iter().enumerate() {
        match u.linear_slope() {
            Some(c) => boosts.push(c),
            None => return Err(Refusal::NotLinear { group: m }),
        }
    }
    Ok(match prefs.h() {
        ScoreTransform::Identity => PriorityPolicy::boosts(boosts),
        h => PriorityPolicy::new(
            PriorityRule::Transformed {
                h: h.clone(),
                boosts,
            },
            us.len(),
        )
        .expect("boost count matches group count"),
    })
}

/// The quota policy that is first-best under every belief, which exists
/// exactly for extremely risk-averse preferences: reserve each group's
/// target and process the residual last.
///
/// A zero utility counts as a target of zero.
pub fn rationalizing_quota(prefs: &Preferences, capacity: f64) -> Result<QuotaPolicy, Refusal> {
    let us = match prefs.diversity() {
        Diversity::Separable(us) => us,
        Diversity::NonSeparable(_) => return Err(Refusal::NonSeparable),
    };
    let range = prefs.h().range();
    let mut targets = Vec::with_capacity(us.len());
    for (m, u) in us.iter().enumerate() {
        match u {
            DiversityUtility::ExtremeTarget { target, slope } => {
                if *target > 0.0 && *slope < range {
                    return Err(Refusal::WeakTarget {
                        group: m,
                        slope: *slope,
                        range,
                    });
                }
                targets.push(*target);
            }
            u if u.linear_slope() == Some(0.0) => targets.push(0.0),
            _ => return Err(Refusal::NotExtreme { group: m }),
        }
    }
    let total: f64 = targets.iter().sum();
    if total > capacity {
        return Err(Refusal::TargetsExceedCapacity { total, capacity });
    }
    Ok(QuotaPolicy::reserves_first(targets, capacity).expect("targets validated against capacity"))
}
