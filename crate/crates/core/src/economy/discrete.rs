use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::GroupId;

/// Magnitude of the tie-breaking jitter applied by
/// [`DiscreteEconomy::with_jitter`].
pub const JITTER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub score: f64,
    pub group: GroupId,
}

impl Agent {
    pub fn new(score: f64, group: usize) -> Self {
        Agent {
            score,
            group: GroupId(group),
        }
    }
}

/// A finite list of agents with distinct scores and an integer capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteEconomy {
    groups: usize,
    agents: Vec<Agent>,
    capacity: usize,
    /// Agent indices of each group, best score first.
    by_group: Vec<Vec<usize>>,
}

impl DiscreteEconomy {
    /// Rejects scores outside `[0, 1]`, duplicate scores, unknown groups
    /// and capacities above the number of agents.
    pub fn new(groups: usize, agents: Vec<Agent>, capacity: usize) -> Result<Self> {
        if groups == 0 {
            return Err(Error::invalid("economy needs at least one group"));
        }
        if capacity == 0 || capacity > agents.len() {
            return Err(Error::invalid(format!(
                "capacity {capacity} must lie in 1..={}",
                agents.len()
            )));
        }
        for a in &agents {
            if !(0.0..=1.0).contains(&a.score) {
                return Err(Error::invalid(format!("score {} outside [0, 1]", a.score)));
            }
            if a.group.0 >= groups {
                return Err(Error::invalid(format!("unknown group {}", a.group.0)));
            }
        }
        let mut sorted: Vec<f64> = agents.iter().map(|a| a.score).collect();
        sorted.sort_by(|a, b| a.total_cmp(b));
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!(
                "duplicate score {}; apply jitter to raw data",
                w[0]
            )));
        }
        let mut by_group = vec![Vec::new(); groups];
        for (i, a) in agents.iter().enumerate() {
            by_group[a.group.0].push(i);
        }
        for list in &mut by_group {
            list.sort_by(|&i, &j| agents[j].score.total_cmp(&agents[i].score));
        }
        Ok(DiscreteEconomy {
            groups,
            agents,
            capacity,
            by_group,
        })
    }

    /// Breaks ties with a deterministic, seed-controlled perturbation of
    /// magnitude at most [`JITTER`], then validates as usual.
    pub fn with_jitter(groups: usize, mut agents: Vec<Agent>, capacity: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for a in &mut agents {
            let e: f64 = rng.gen_range(-1.0..1.0);
            a.score = (a.score + e * JITTER).clamp(0.0, 1.0);
        }
        Self::new(groups, agents, capacity)
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Agent indices of `group`, best score first.
    pub fn ranked(&self, group: GroupId) -> &[usize] {
        &self.by_group[group.0]
    }

    pub fn group_size(&self, group: GroupId) -> usize {
        self.by_group[group.0].len()
    }
}
