use serde::{Deserialize, Serialize};

use super::apm::Func2;
use super::clearing::{clear, shifted_clear, Rank};
use crate::economy::{Allocation, ContinuumEconomy, CutoffAllocation, DiscreteAllocation, DiscreteEconomy, Economy, Mechanism};
use crate::error::{Error, Result};
use crate::preferences::ScoreTransform;

/// A fixed priority `P(s, m)` over scores and groups.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum PriorityRule {
    /// `P(s, m) = s`.
    Merit,
    /// `P(s, m) = s + boosts[m]`.
    Boosts { boosts: Vec<f64> },
    /// `P(s, m) = h(s) + boosts[m]`, compared in transformed units.
    Transformed { h: ScoreTransform, boosts: Vec<f64> },
    /// `P(s, m) = values[m]`, independent of the score.
    Constant { values: Vec<f64> },
    /// Per-group linear interpolation of `values[m]` on the score grid `ss`.
    Tabulated { ss: Vec<f64>, values: Vec<Vec<f64>> },
    /// `P(s, m)` from a closure called as `(s, m as f64)`.
    #[serde(skip)]
    Custom(Func2),
}

/// A priority rule together with its sampled monotonicity in the score.
#[derive(Debug, Clone)]
pub struct PriorityPolicy {
    rule: PriorityRule,
    groups: usize,
    monotone: bool,
}

const MONOTONE_SAMPLES: usize = 1024;

impl PriorityPolicy {
    pub fn new(rule: PriorityRule, groups: usize) -> Result<Self> {
        match &rule {
            PriorityRule::Boosts { boosts } | PriorityRule::Transformed { boosts, .. } if boosts.len() != groups => {
                return Err(Error::invalid("priority needs one boost per group"));
            }
            PriorityRule::Constant { values } if values.len() != groups => {
                return Err(Error::invalid("priority needs one value per group"));
            }
            PriorityRule::Tabulated { ss, values }
                if ss.len() < 2 || values.len() != groups || values.iter().any(|v| v.len() != ss.len()) =>
            {
                return Err(Error::invalid("tabulated priority grid has inconsistent dimensions"));
            }
            _ => {}
        }
        let mut policy = PriorityPolicy {
            rule,
            groups,
            monotone: true,
        };
        policy.monotone = (0..groups).all(|m| {
            (1..MONOTONE_SAMPLES).all(|j| {
                let a = (j - 1) as f64 / (MONOTONE_SAMPLES - 1) as f64;
                let b = j as f64 / (MONOTONE_SAMPLES - 1) as f64;
                policy.eval(b, m) >= policy.eval(a, m)
            })
        });
        Ok(policy)
    }

    /// Pure merit: rank by score alone.
    pub fn merit(groups: usize) -> Self {
        PriorityPolicy {
            rule: PriorityRule::Merit,
            groups,
            monotone: true,
        }
    }

    /// Additive boosts on the raw score.
    pub fn boosts(boosts: Vec<f64>) -> Self {
        PriorityPolicy {
            groups: boosts.len(),
            rule: PriorityRule::Boosts { boosts },
            monotone: true,
        }
    }

    pub fn rule(&self) -> &PriorityRule {
        &self.rule
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    /// True when `P` is nondecreasing in the score for every group on a
    /// 1024-point grid.
    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    #[inline]
    pub fn eval(&self, s: f64, m: usize) -> f64 {
        match &self.rule {
            PriorityRule::Merit => s,
            PriorityRule::Boosts { boosts } => s + boosts[m],
            PriorityRule::Transformed { h, boosts } => h.eval(s) + boosts[m],
            PriorityRule::Constant { values } => values[m],
            PriorityRule::Tabulated { ss, values } => {
                let n = ss.len();
                let i = match ss.iter().position(|&g| g > s) {
                    Some(0) => 0,
                    Some(i) => i - 1,
                    None => n - 2,
                }
                .min(n - 2);
                let t = ((s - ss[i]) / (ss[i + 1] - ss[i])).clamp(0.0, 1.0);
                values[m][i] + t * (values[m][i + 1] - values[m][i])
            }
            PriorityRule::Custom(f) => (f.0)(s, m as f64),
        }
    }
}

/// Admits a continuum economy in descending priority until `q` is filled.
///
/// Mass whose priority ties with the marginal priority is rationed
/// proportionally across all tied groups.
pub fn run_priority(policy: &PriorityPolicy, economy: &ContinuumEconomy) -> Result<CutoffAllocation> {
    if policy.groups() != economy.groups() {
        return Err(Error::invalid("policy and economy disagree on the number of groups"));
    }
    if !policy.is_monotone() {
        return Err(Error::NotMonotone("continuum priority must be nondecreasing in the score".into()));
    }
    let q = economy.capacity();
    let total = economy.total_mass();
    if total < q * (1.0 - 1e-12) {
        return Err(Error::Infeasible {
            available: total,
            capacity: q,
        });
    }
    let tops = vec![1.0; policy.groups()];
    let cleared = match policy.rule() {
        PriorityRule::Merit => shifted_clear(economy, &vec![0.0; policy.groups()], &tops, q),
        PriorityRule::Boosts { boosts } => shifted_clear(economy, boosts, &tops, q),
        _ => {
            let ranks: Vec<Rank<'_>> = (0..policy.groups())
                .map(|m| Box::new(move |c: f64| policy.eval(c, m)) as Rank<'_>)
                .collect();
            clear(economy, &ranks, &tops, q)?
        }
    };
    CutoffAllocation::new(economy, cleared.cutoffs, cleared.floors, cleared.fractions)
}

/// Admits the `q` agents with the highest priority; equal priorities are
/// ordered by score.
pub fn run_priority_discrete(policy: &PriorityPolicy, economy: &DiscreteEconomy) -> Result<DiscreteAllocation> {
    if policy.groups() != economy.groups() {
        return Err(Error::invalid("policy and economy disagree on the number of groups"));
    }
    let agents = economy.agents();
    let mut order: Vec<usize> = (0..agents.len()).collect();
    let key = |i: usize| policy.eval(agents[i].score, agents[i].group.0);
    order.sort_by(|&a, &b| {
        key(b)
            .total_cmp(&key(a))
            .then(agents[b].score.total_cmp(&agents[a].score))
    });
    let mut admitted = vec![false; agents.len()];
    for &i in order.iter().take(economy.capacity()) {
        admitted[i] = true;
    }
    DiscreteAllocation::new(economy, admitted)
}

impl Mechanism for PriorityPolicy {
    fn allocate(&self, economy: &Economy) -> Result<Allocation> {
        match economy {
            Economy::Continuum(c) => run_priority(self, c).map(Allocation::from),
            Economy::Discrete(d) => run_priority_discrete(self, d).map(Allocation::from),
        }
    }
}
