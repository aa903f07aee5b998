use crate::error::{Error, Result};

use super::Economy;

/// Tolerance on the sum of state weights.
pub const WEIGHT_TOL: f64 = 1e-12;

/// A finite-support distribution over economies.
#[derive(Debug, Clone)]
pub struct Belief {
    states: Vec<(Economy, f64)>,
    heterogeneous: bool,
}

impl Belief {
    /// States must share the group set and capacity; weights must be
    /// positive and sum to one.
    pub fn new(states: Vec<(Economy, f64)>) -> Result<Self> {
        Self::build(states, false)
    }

    /// Allows states with different capacities.
    pub fn heterogeneous(states: Vec<(Economy, f64)>) -> Result<Self> {
        Self::build(states, true)
    }

    /// A single state with probability one.
    pub fn certain(economy: Economy) -> Self {
        Belief {
            states: vec![(economy, 1.0)],
            heterogeneous: false,
        }
    }

    /// Equal weights on every economy.
    pub fn uniform(economies: Vec<Economy>) -> Result<Self> {
        let n = economies.len() as f64;
        Self::new(economies.into_iter().map(|e| (e, 1.0 / n)).collect())
    }

    fn build(states: Vec<(Economy, f64)>, heterogeneous: bool) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("belief needs at least one state"));
        }
        if states.iter().any(|(_, w)| !(*w > 0.0)) {
            return Err(Error::invalid("state weights must be positive"));
        }
        let total: f64 = states.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > WEIGHT_TOL * states.len().max(1) as f64 {
            return Err(Error::invalid(format!("state weights sum to {total}, not 1")));
        }
        let groups = states[0].0.groups();
        let capacity = states[0].0.capacity();
        for (i, (e, _)) in states.iter().enumerate() {
            if e.groups() != groups {
                return Err(Error::invalid(format!("state {i} has {} groups, expected {groups}", e.groups())));
            }
            if !heterogeneous && e.capacity() != capacity {
                return Err(Error::invalid(format!(
                    "state {i} has capacity {}, expected {capacity}",
                    e.capacity()
                )));
            }
        }
        Ok(Belief {
            states,
            heterogeneous,
        })
    }

    pub fn states(&self) -> &[(Economy, f64)] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn groups(&self) -> usize {
        self.states[0].0.groups()
    }

    pub fn is_heterogeneous(&self) -> bool {
        self.heterogeneous
    }
}
