//! Single-authority mechanisms.
//!
//! Adaptive priorities, fixed priorities and quotas on continuum and
//! discrete economies, the first-best adaptive priority, exhaustive
//! optimality oracles, and conversions between policy classes.
//!
//! Adaptive priorities are compared in transformed units `h(s) + u_m'(y)`;
//! `h^{-1}` is applied only for display.

mod apm;
mod brute;
mod clearing;
mod equivalence;
mod priority;
mod quota;
mod rationalize;
mod spec;

#[doc(hidden)]
pub mod adversarial;

pub use apm::{
    check_fixed_point, discrete_fixed_points, optimal_apm, optimal_discrete_apm, run_apm_discrete, run_apm_greedy,
    satisfies_discrete_conditions, AdaptivePriority, Func2, PriorityMap, MONOTONE_GRID,
};
pub use brute::{
    brute_force_optimum, brute_force_subsets, composition_count, continuum_optimum, continuum_optimum_by, continuum_utility_at,
    discrete_utility, for_each_composition, MAX_COMPOSITIONS, MAX_SUBSET_AGENTS,
};
pub use equivalence::{equivalent_subsidy, no_uncertainty_equivalents, priority_from_cutoffs, EquivalentSubsidy, StateEquivalents};
pub use priority::{run_priority, run_priority_discrete, PriorityPolicy, PriorityRule};
pub use quota::{run_quota, run_quota_discrete, QuotaPolicy, Round};
pub use rationalize::{rationalizing_priority, rationalizing_quota, Refusal};
pub use spec::{NamedPolicy, Policy, PolicySpec};
