use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ContinuumEconomy, DiscreteEconomy, GroupId};

/// Tolerance for recomputing stored measures from cutoffs.
pub const INTEGRITY_TOL: f64 = 1e-9;

/// A continuum allocation described by per-group cutoffs.
///
/// Group `m` receives every agent scoring at least `cutoffs[m]`, plus the
/// share `fractions[m]` of the band `[floors[m], cutoffs[m])`. The band is
/// empty unless priorities tie over a range of scores, in which case the
/// tied mass is rationed proportionally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffAllocation {
    cutoffs: Vec<f64>,
    floors: Vec<f64>,
    fractions: Vec<f64>,
    x: Vec<f64>,
}

impl CutoffAllocation {
    /// Builds an allocation and derives the admitted measures from the
    /// economy.
    pub fn new(
        economy: &ContinuumEconomy,
        cutoffs: Vec<f64>,
        floors: Vec<f64>,
        fractions: Vec<f64>,
    ) -> Result<Self> {
        let g = economy.groups();
        if cutoffs.len() != g || floors.len() != g || fractions.len() != g {
            return Err(Error::invalid("allocation vectors must have one entry per group"));
        }
        for m in 0..g {
            if !(0.0..=1.0).contains(&cutoffs[m]) || !(0.0..=cutoffs[m]).contains(&floors[m]) {
                return Err(Error::invalid(format!(
                    "group {m}: need 0 <= floor <= cutoff <= 1, got floor {} cutoff {}",
                    floors[m], cutoffs[m]
                )));
            }
            if !(0.0..=1.0).contains(&fractions[m]) {
                return Err(Error::invalid(format!("group {m}: rationed share outside [0, 1]")));
            }
        }
        let x = (0..g)
            .map(|m| admitted_mass(economy, m, cutoffs[m], floors[m], fractions[m]))
            .collect();
        Ok(CutoffAllocation {
            cutoffs,
            floors,
            fractions,
            x,
        })
    }

    /// Plain cutoffs with no rationed band.
    pub fn from_cutoffs(economy: &ContinuumEconomy, cutoffs: Vec<f64>) -> Result<Self> {
        let floors = cutoffs.clone();
        let fractions = vec![0.0; cutoffs.len()];
        Self::new(economy, cutoffs, floors, fractions)
    }

    /// The allocation admitting nobody.
    pub fn empty(economy: &ContinuumEconomy) -> Self {
        let g = economy.groups();
        CutoffAllocation {
            cutoffs: vec![1.0; g],
            floors: vec![1.0; g],
            fractions: vec![0.0; g],
            x: vec![0.0; g],
        }
    }

    pub fn cutoffs(&self) -> &[f64] {
        &self.cutoffs
    }

    pub fn floors(&self) -> &[f64] {
        &self.floors
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    /// Admitted measure of each group.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn total(&self) -> f64 {
        self.x.iter().sum()
    }

    /// Recomputes the admitted measures and compares with the stored ones.
    pub fn verify(&self, economy: &ContinuumEconomy) -> Result<()> {
        for m in 0..self.x.len() {
            let again = admitted_mass(
                economy,
                m,
                self.cutoffs[m],
                self.floors[m],
                self.fractions[m],
            );
            if (again - self.x[m]).abs() > INTEGRITY_TOL {
                return Err(Error::Integrity(format!(
                    "group {m}: stored measure {} but cutoffs give {again}",
                    self.x[m]
                )));
            }
        }
        Ok(())
    }

    /// Score index `Σ_m ∫ h f` over the admitted region.
    pub fn score_index(&self, economy: &ContinuumEconomy, h: &dyn Fn(f64) -> f64) -> f64 {
        (0..self.x.len())
            .map(|m| {
                let g = GroupId(m);
                let above = economy.score_above(g, self.cutoffs[m], h);
                if self.fractions[m] > 0.0 && self.floors[m] < self.cutoffs[m] {
                    let band = economy.score_above(g, self.floors[m], h) - above;
                    above + self.fractions[m] * band
                } else {
                    above
                }
            })
            .sum()
    }

    /// True when `(score, group)` is fully admitted.
    pub fn admits(&self, group: GroupId, score: f64) -> bool {
        score >= self.cutoffs[group.0]
    }
}

fn admitted_mass(economy: &ContinuumEconomy, m: usize, cutoff: f64, floor: f64, share: f64) -> f64 {
    let g = GroupId(m);
    let above = economy.mass_above(g, cutoff);
    if share > 0.0 && floor < cutoff {
        above + share * (economy.mass_above(g, floor) - above)
    } else {
        above
    }
}

/// A set of admitted agents in a discrete economy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteAllocation {
    admitted: Vec<bool>,
    counts: Vec<usize>,
}

impl DiscreteAllocation {
    pub fn new(economy: &DiscreteEconomy, admitted: Vec<bool>) -> Result<Self> {
        if admitted.len() != economy.len() {
            return Err(Error::invalid("admission vector must cover every agent"));
        }
        let mut counts = vec![0; economy.groups()];
        for (a, &inside) in economy.agents().iter().zip(&admitted) {
            if inside {
                counts[a.group.0] += 1;
            }
        }
        if counts.iter().sum::<usize>() > economy.capacity() {
            return Err(Error::invalid("allocation exceeds capacity"));
        }
        Ok(DiscreteAllocation { admitted, counts })
    }

    /// Admits the best `counts[m]` agents of every group.
    pub fn from_counts(economy: &DiscreteEconomy, counts: &[usize]) -> Result<Self> {
        let mut admitted = vec![false; economy.len()];
        for (m, &k) in counts.iter().enumerate() {
            let ranked = economy.ranked(GroupId(m));
            if k > ranked.len() {
                return Err(Error::invalid(format!("group {m} has fewer than {k} agents")));
            }
            for &i in &ranked[..k] {
                admitted[i] = true;
            }
        }
        Self::new(economy, admitted)
    }

    pub fn is_admitted(&self, agent: usize) -> bool {
        self.admitted[agent]
    }

    pub fn admitted(&self) -> &[bool] {
        &self.admitted
    }

    /// Indices of admitted agents in ascending order.
    pub fn admitted_indices(&self) -> Vec<usize> {
        self.admitted
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn x(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// `Σ h(s)` over admitted agents, summed in agent order.
    pub fn score_index(&self, economy: &DiscreteEconomy, h: &dyn Fn(f64) -> f64) -> f64 {
        economy
            .agents()
            .iter()
            .zip(&self.admitted)
            .filter(|(_, &a)| a)
            .map(|(a, _)| h(a.score))
            .sum()
    }

    /// Lowest admitted score per group, `None` when a group is shut out.
    pub fn cutoffs(&self, economy: &DiscreteEconomy) -> Vec<Option<f64>> {
        (0..economy.groups())
            .map(|m| {
                economy
                    .ranked(GroupId(m))
                    .iter()
                    .filter(|&&i| self.admitted[i])
                    .map(|&i| economy.agents()[i].score)
                    .next_back()
            })
            .collect()
    }

    /// True when every group's admitted agents outscore its rejected ones.
    pub fn has_cutoff_structure(&self, economy: &DiscreteEconomy) -> bool {
        (0..economy.groups()).all(|m| {
            let r = economy.ranked(GroupId(m));
            let k = self.counts[m];
            r[..k].iter().all(|&i| self.admitted[i]) && r[k..].iter().all(|&i| !self.admitted[i])
        })
    }
}

/// Outcome of a single-authority mechanism on either kind of economy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Allocation {
    Continuum(CutoffAllocation),
    Discrete(DiscreteAllocation),
}

impl Allocation {
    pub fn x(&self) -> Vec<f64> {
        match self {
            Allocation::Continuum(a) => a.x().to_vec(),
            Allocation::Discrete(a) => a.x(),
        }
    }

    pub fn as_continuum(&self) -> Option<&CutoffAllocation> {
        match self {
            Allocation::Continuum(a) => Some(a),
            Allocation::Discrete(_) => None,
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteAllocation> {
        match self {
            Allocation::Discrete(a) => Some(a),
            Allocation::Continuum(_) => None,
        }
    }
}

impl From<CutoffAllocation> for Allocation {
    fn from(a: CutoffAllocation) -> Self {
        Allocation::Continuum(a)
    }
}

impl From<DiscreteAllocation> for Allocation {
    fn from(a: DiscreteAllocation) -> Self {
        Allocation::Discrete(a)
    }
}
