//! Agents, economies, beliefs and allocations.
//!
//! A continuum economy is a piecewise-constant density on a uniform grid of
//! score cells, so every measure is an exact finite sum. A discrete economy
//! is a list of agents with distinct scores. A [`Belief`] is a finite
//! distribution over economies.
//!
//! ```
//! use apm_core::economy::{ContinuumEconomy, GroupId};
//!
//! let econ = ContinuumEconomy::uniform(&[0.5], 1000, 0.2).unwrap();
//! assert!((econ.mass_above(GroupId(0), 0.25) - 0.375).abs() < 1e-12);
//! ```

mod allocation;
mod belief;
mod continuum;
mod discrete;
mod io;

use serde::{Deserialize, Serialize};

pub use allocation::{Allocation, CutoffAllocation, DiscreteAllocation, INTEGRITY_TOL};
pub use belief::{Belief, WEIGHT_TOL};
pub use continuum::ContinuumEconomy;
pub use discrete::{Agent, DiscreteEconomy, JITTER};
pub use io::{AgentRecord, BeliefFile, DensityGrid, EconomyFile, GroupRef, StateEconomy, StateRecord};

use crate::error::{Error, Result};
use crate::preferences::Preferences;

/// Index of a group in a problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(pub usize);

impl From<usize> for GroupId {
    fn from(m: usize) -> Self {
        GroupId(m)
    }
}

/// Either kind of single-authority economy.
#[derive(Debug, Clone, PartialEq)]
pub enum Economy {
    Discrete(DiscreteEconomy),
    Continuum(ContinuumEconomy),
}

impl Economy {
    pub fn groups(&self) -> usize {
        match self {
            Economy::Discrete(d) => d.groups(),
            Economy::Continuum(c) => c.groups(),
        }
    }

    pub fn capacity(&self) -> f64 {
        match self {
            Economy::Discrete(d) => d.capacity() as f64,
            Economy::Continuum(c) => c.capacity(),
        }
    }

    pub fn as_continuum(&self) -> Option<&ContinuumEconomy> {
        match self {
            Economy::Continuum(c) => Some(c),
            Economy::Discrete(_) => None,
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteEconomy> {
        match self {
            Economy::Discrete(d) => Some(d),
            Economy::Continuum(_) => None,
        }
    }
}

impl From<ContinuumEconomy> for Economy {
    fn from(c: ContinuumEconomy) -> Self {
        Economy::Continuum(c)
    }
}

impl From<DiscreteEconomy> for Economy {
    fn from(d: DiscreteEconomy) -> Self {
        Economy::Discrete(d)
    }
}

/// A rule mapping each economy to an allocation.
pub trait Mechanism {
    fn allocate(&self, economy: &Economy) -> Result<Allocation>;
}

impl<F> Mechanism for F
where
    F: Fn(&Economy) -> Result<Allocation>,
{
    fn allocate(&self, economy: &Economy) -> Result<Allocation> {
        self(economy)
    }
}

/// Admitted measures and the score index `s̄_h` of an allocation.
///
/// Continuum allocations are recomputed from their cutoffs and checked
/// against the stored measures.
pub fn measures_and_score_index(
    economy: &Economy,
    allocation: &Allocation,
    prefs: &Preferences,
) -> Result<(Vec<f64>, f64)> {
    let h = |s: f64| prefs.h().eval(s);
    match (economy, allocation) {
        (Economy::Continuum(e), Allocation::Continuum(a)) => {
            a.verify(e)?;
            Ok((a.x().to_vec(), a.score_index(e, &h)))
        }
        (Economy::Discrete(e), Allocation::Discrete(a)) => Ok((a.x(), a.score_index(e, &h))),
        _ => Err(Error::Integrity("allocation kind does not match the economy".into())),
    }
}

/// Utility `g(s̄_h + Σ u_m(x_m))` of one allocation.
pub fn allocation_utility(economy: &Economy, allocation: &Allocation, prefs: &Preferences) -> Result<f64> {
    let (x, s) = measures_and_score_index(economy, allocation, prefs)?;
    prefs.utility(s, &x)
}

/// `Σ_ω Λ(ω) g(s̄_h + Σ u_m(x_m))` for the allocations a mechanism picks in
/// every state.
pub fn expected_utility(mechanism: &dyn Mechanism, belief: &Belief, prefs: &Preferences) -> Result<f64> {
    let mut total = 0.0;
    for (i, (economy, w)) in belief.states().iter().enumerate() {
        let u = mechanism
            .allocate(economy)
            .and_then(|a| allocation_utility(economy, &a, prefs))
            .map_err(|e| Error::in_state(i, e))?;
        total += w * u;
    }
    Ok(total)
}
