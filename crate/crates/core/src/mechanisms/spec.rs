use serde::{Deserialize, Serialize};

use super::apm::{optimal_apm, optimal_discrete_apm, AdaptivePriority};
use super::priority::{PriorityPolicy, PriorityRule};
use super::quota::{QuotaPolicy, Round};
use crate::economy::{Allocation, Economy, Mechanism};
use crate::error::{Error, Result};
use crate::preferences::Preferences;

/// File representation of a single-authority policy.
///
/// ```
/// use apm_core::mechanisms::PolicySpec;
///
/// let spec: PolicySpec = serde_json::from_str(
///     r#"{"kind": "quota", "reserves": [0.1, 0.0], "precedence": [{"group": 0}, "residual", {"group": 1}]}"#,
/// ).unwrap();
/// assert_eq!(spec.label(), "quota");
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicySpec {
    Priority {
        rule: PriorityRule,
    },
    /// Reserves per group; without a precedence, reserves come first.
    Quota {
        reserves: Vec<f64>,
        #[serde(default)]
        precedence: Option<Vec<Round>>,
    },
    /// The first-best adaptive priority of the supplied preferences.
    OptimalApm,
}

/// A named policy in a comparison set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedPolicy {
    pub name: String,
    #[serde(flatten)]
    pub spec: PolicySpec,
}

/// A built policy, ready to allocate.
#[derive(Debug, Clone)]
pub enum Policy {
    Priority(PriorityPolicy),
    Quota(QuotaPolicy),
    /// Marginal form for continuum economies, increment form for discrete
    /// ones.
    Apm {
        continuum: AdaptivePriority,
        discrete: AdaptivePriority,
    },
}

impl PolicySpec {
    pub fn label(&self) -> &'static str {
        match self {
            PolicySpec::Priority { .. } => "priority",
            PolicySpec::Quota { .. } => "quota",
            PolicySpec::OptimalApm => "optimal-apm",
        }
    }

    /// Validates against the group count and capacity of the economies it
    /// will run on. Adaptive priorities need preferences.
    pub fn build(&self, groups: usize, capacity: f64, prefs: Option<&Preferences>) -> Result<Policy> {
        match self {
            PolicySpec::Priority { rule } => Ok(Policy::Priority(PriorityPolicy::new(rule.clone(), groups)?)),
            PolicySpec::Quota { reserves, precedence } => {
                if reserves.len() != groups {
                    return Err(Error::invalid(format!(
                        "{} reserves for {groups} groups",
                        reserves.len()
                    )));
                }
                Ok(Policy::Quota(match precedence {
                    Some(order) => QuotaPolicy::new(reserves.clone(), order.clone(), capacity)?,
                    None => QuotaPolicy::reserves_first(reserves.clone(), capacity)?,
                }))
            }
            PolicySpec::OptimalApm => {
                let prefs = prefs.ok_or_else(|| Error::invalid("the optimal adaptive priority needs preferences"))?;
                if prefs.groups() != groups {
                    return Err(Error::invalid("preferences and economy disagree on the number of groups"));
                }
                Ok(Policy::Apm {
                    continuum: optimal_apm(prefs)?,
                    discrete: optimal_discrete_apm(prefs)?,
                })
            }
        }
    }
}

impl Mechanism for Policy {
    fn allocate(&self, economy: &Economy) -> Result<Allocation> {
        match (self, economy) {
            (Policy::Priority(p), _) => p.allocate(economy),
            (Policy::Quota(p), _) => p.allocate(economy),
            (Policy::Apm { continuum, .. }, Economy::Continuum(_)) => continuum.allocate(economy),
            (Policy::Apm { discrete, .. }, Economy::Discrete(_)) => discrete.allocate(economy),
        }
    }
}
