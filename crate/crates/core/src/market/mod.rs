//! Markets with several authorities.
//!
//! Agents carry a score at every authority, a group and a strict ranking of
//! the authorities they find acceptable; unranked authorities sit below the
//! outside option. A matching is described by a cutoff matrix `S[m][c]`:
//! each agent goes to the authority it ranks highest among those whose
//! group cutoff its score clears.
//!
//! Populations are weighted grids. In common-score mode every cell carries
//! mass spread uniformly over its score interval, so cutoffs landing inside
//! a cell are resolved exactly.

mod efficiency;
mod fixtures;
mod response;
mod sequential;
mod stable;

use serde::{Deserialize, Serialize};

use crate::economy::{ContinuumEconomy, GroupId};
use crate::error::{Error, Result};
use crate::preferences::{Preferences, PreferencesSpec};

pub use efficiency::{aggregate_diversity_value, apmq_allocate, AggregateValue, ApmQOutcome, ApmQPolicy, DUAL_TOL};
pub use fixtures::{symmetric_economy, three_authority_economy, two_authority_economy};
pub use response::Strategy;
pub use sequential::{dominance_trial, equilibrium_cutoffs, sequential_simulation, DominanceTrial, SequentialOutcome, Stage};
pub use stable::{
    authority_summaries, stable_matching, stable_matching_with, t_map, total_welfare, verify_stability, AuthoritySummary, StabilityReport,
    StableMatching, TMap, Violation, MAX_ITERATIONS, STABLE_TOL,
};

/// One authority: capacity and preferences over its admitted class.
#[derive(Debug, Clone)]
pub struct Authority {
    pub name: String,
    pub capacity: f64,
    pub prefs: Preferences,
}

/// A weighted agent type with authority-specific scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleType {
    pub scores: Vec<f64>,
    pub group: usize,
    /// Acceptable authorities, best first.
    pub ranking: Vec<usize>,
    pub weight: f64,
}

/// The agent side of a market.
#[derive(Debug, Clone)]
pub enum Population {
    /// Common scores: `density[m][r][k]` is the density of group `m` agents
    /// with ranking `rankings[r]` in score cell `k`.
    Grid {
        rankings: Vec<Vec<usize>>,
        density: Vec<Vec<Vec<f64>>>,
    },
    /// Authority-specific scores; each type's weight is spread over the
    /// grid cell holding its score at the authority in question.
    Sample { bins: usize, types: Vec<SampleType> },
}

/// A market of authorities and agents.
#[derive(Debug, Clone)]
pub struct MultiAuthorityEconomy {
    authorities: Vec<Authority>,
    groups: usize,
    population: Population,
}

impl MultiAuthorityEconomy {
    pub fn new(authorities: Vec<Authority>, groups: usize, population: Population) -> Result<Self> {
        let n = authorities.len();
        if n == 0 || groups == 0 {
            return Err(Error::invalid("market needs at least one authority and one group"));
        }
        for a in &authorities {
            if !(a.capacity > 0.0) {
                return Err(Error::invalid(format!("authority {} needs positive capacity", a.name)));
            }
            if a.prefs.groups() != groups {
                return Err(Error::invalid(format!("authority {} has preferences over the wrong groups", a.name)));
            }
        }
        let check_ranking = |r: &[usize]| -> Result<()> {
            let mut seen = vec![false; n];
            for &c in r {
                if c >= n || seen[c] {
                    return Err(Error::invalid("rankings must list distinct known authorities"));
                }
                seen[c] = true;
            }
            Ok(())
        };
        let total = match &population {
            Population::Grid { rankings, density } => {
                rankings.iter().try_for_each(|r| check_ranking(r))?;
                if density.len() != groups || density.iter().any(|d| d.len() != rankings.len()) {
                    return Err(Error::invalid("grid density must be indexed by group, then ranking"));
                }
                let bins = density[0][0].len();
                if bins == 0 || density.iter().flatten().any(|d| d.len() != bins) {
                    return Err(Error::invalid("grid densities must share the score grid"));
                }
                if density.iter().flatten().flatten().any(|&f| !(f >= 0.0) || !f.is_finite()) {
                    return Err(Error::invalid("densities must be finite and nonnegative"));
                }
                density.iter().flatten().flatten().sum::<f64>() / bins as f64
            }
            Population::Sample { bins, types } => {
                if *bins == 0 {
                    return Err(Error::invalid("sample mode needs a score grid"));
                }
                for t in types {
                    check_ranking(&t.ranking)?;
                    if t.group >= groups || t.scores.len() != n || !(t.weight > 0.0) {
                        return Err(Error::invalid("sample types need a known group, one score per authority and positive weight"));
                    }
                    if t.scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
                        return Err(Error::invalid("scores must lie in [0, 1]"));
                    }
                }
                types.iter().map(|t| t.weight).sum()
            }
        };
        let capacity: f64 = authorities.iter().map(|a| a.capacity).sum();
        if !(capacity < total) {
            return Err(Error::invalid(format!(
                "total capacity {capacity} must be below the agent mass {total}"
            )));
        }
        Ok(MultiAuthorityEconomy {
            authorities,
            groups,
            population,
        })
    }

    pub fn authorities(&self) -> &[Authority] {
        &self.authorities
    }

    pub fn authority_count(&self) -> usize {
        self.authorities.len()
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn bins(&self) -> usize {
        match &self.population {
            Population::Grid { density, .. } => density[0][0].len(),
            Population::Sample { bins, .. } => *bins,
        }
    }

    /// Total mass of agents.
    pub fn agent_mass(&self) -> f64 {
        match &self.population {
            Population::Grid { density, .. } => density.iter().flatten().flatten().sum::<f64>() / self.bins() as f64,
            Population::Sample { types, .. } => types.iter().map(|t| t.weight).sum(),
        }
    }

    pub fn is_common_scores(&self) -> bool {
        matches!(self.population, Population::Grid { .. })
    }

    /// Replaces one authority's preferences.
    pub fn with_preferences(&self, c: usize, prefs: Preferences) -> Result<Self> {
        let mut out = self.clone();
        if c >= out.authorities.len() || prefs.groups() != self.groups {
            return Err(Error::invalid("unknown authority or wrong group count"));
        }
        out.authorities[c].prefs = prefs;
        Ok(out)
    }

    /// Agents who would take authority `c` if admitted there: those ranking
    /// `c` acceptable and clearing no authority they rank above it. Returned
    /// as a single-authority economy on `c`'s score grid.
    pub fn induced_economy(&self, c: usize, cutoffs: &CutoffMatrix) -> Result<ContinuumEconomy> {
        let bins = self.bins();
        let w = 1.0 / bins as f64;
        let mut density = vec![vec![0.0; bins]; self.groups];
        match &self.population {
            Population::Grid { rankings, density: d } => {
                for (r, ranking) in rankings.iter().enumerate() {
                    let pos = match ranking.iter().position(|&a| a == c) {
                        Some(p) => p,
                        None => continue,
                    };
                    for (m, row) in density.iter_mut().enumerate() {
                        let cells = &d[m][r];
                        // Agents below every better authority's cutoff.
                        let ceiling = ranking[..pos]
                            .iter()
                            .map(|&b| cutoffs.get(m, b))
                            .fold(f64::INFINITY, f64::min);
                        for (k, out) in row.iter_mut().enumerate() {
                            let f = cells[k];
                            if f == 0.0 {
                                continue;
                            }
                            let lo = k as f64 * w;
                            let share = ((ceiling - lo) / w).clamp(0.0, 1.0);
                            *out += f * share;
                        }
                    }
                }
            }
            Population::Sample { types, .. } => {
                for t in types {
                    let pos = match t.ranking.iter().position(|&a| a == c) {
                        Some(p) => p,
                        None => continue,
                    };
                    let clears_better = t.ranking[..pos]
                        .iter()
                        .any(|&b| t.scores[b] >= cutoffs.get(t.group, b));
                    if clears_better {
                        continue;
                    }
                    let k = ((t.scores[c] * bins as f64) as usize).min(bins - 1);
                    density[t.group][k] += t.weight / w;
                }
            }
        }
        ContinuumEconomy::new_unfilled(density, self.authorities[c].capacity)
    }

    /// The group masses at `c` under the cutoff matching: `D_c(S)`.
    pub fn demand(&self, cutoffs: &CutoffMatrix) -> Result<Vec<Vec<f64>>> {
        (0..self.authority_count())
            .map(|c| {
                let e = self.induced_economy(c, cutoffs)?;
                Ok((0..self.groups)
                    .map(|m| e.mass_above(GroupId(m), cutoffs.get(m, c)))
                    .collect())
            })
            .collect()
    }
}

/// Group-by-authority cutoffs `S[m][c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffMatrix {
    groups: usize,
    authorities: usize,
    values: Vec<f64>,
}

impl CutoffMatrix {
    pub fn filled(groups: usize, authorities: usize, value: f64) -> Self {
        CutoffMatrix {
            groups,
            authorities,
            values: vec![value; groups * authorities],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let groups = rows.len();
        let authorities = rows.first().map_or(0, |r| r.len());
        if groups == 0 || authorities == 0 || rows.iter().any(|r| r.len() != authorities) {
            return Err(Error::invalid("cutoff matrix needs equal-length nonempty rows"));
        }
        Ok(CutoffMatrix {
            groups,
            authorities,
            values: rows.into_iter().flatten().collect(),
        })
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn authorities(&self) -> usize {
        self.authorities
    }

    #[inline]
    pub fn get(&self, m: usize, c: usize) -> f64 {
        self.values[m * self.authorities + c]
    }

    pub fn set(&mut self, m: usize, c: usize, v: f64) {
        self.values[m * self.authorities + c] = v;
    }

    /// Cutoffs of authority `c`, one per group.
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.groups).map(|m| self.get(m, c)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.authorities).map(|r| r.to_vec()).collect()
    }

    pub fn sup_distance(&self, other: &CutoffMatrix) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// True when every entry is at least the corresponding entry of `other`.
    pub fn dominates(&self, other: &CutoffMatrix) -> bool {
        self.values.iter().zip(&other.values).all(|(a, b)| a >= b)
    }
}

/// File representation of an authority.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuthorityFile {
    pub name: String,
    pub capacity: f64,
    pub preferences: PreferencesSpec,
}

/// File representation of the agent side.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum AgentsFile {
    Grid {
        rankings: Vec<Vec<usize>>,
        density: Vec<Vec<Vec<f64>>>,
    },
    Sample {
        bins: usize,
        types: Vec<SampleType>,
    },
}

/// File representation of a market.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketFile {
    pub authorities: Vec<AuthorityFile>,
    pub groups: usize,
    pub agents: AgentsFile,
    #[serde(default)]
    pub common_scores: Option<bool>,
}

impl MultiAuthorityEconomy {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: MarketFile = serde_json::from_str(text)?;
        let authorities = file
            .authorities
            .into_iter()
            .map(|a| {
                Ok(Authority {
                    name: a.name,
                    capacity: a.capacity,
                    prefs: a.preferences.try_into()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let population = match file.agents {
            AgentsFile::Grid { rankings, density } => Population::Grid { rankings, density },
            AgentsFile::Sample { bins, types } => Population::Sample { bins, types },
        };
        if let Some(common) = file.common_scores {
            if common != matches!(population, Population::Grid { .. }) {
                return Err(Error::invalid("common_scores must match the agent mode (grid is common-score)"));
            }
        }
        Self::new(authorities, file.groups, population)
    }

    /// Serializes the market; fails when some preferences are not built-in
    /// families.
    pub fn to_json(&self) -> Result<String> {
        let authorities = self
            .authorities
            .iter()
            .map(|a| {
                Ok(AuthorityFile {
                    name: a.name.clone(),
                    capacity: a.capacity,
                    preferences: a
                        .prefs
                        .spec()
                        .ok_or_else(|| Error::invalid("preferences are not serializable"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let agents = match &self.population {
            Population::Grid { rankings, density } => AgentsFile::Grid {
                rankings: rankings.clone(),
                density: density.clone(),
            },
            Population::Sample { bins, types } => AgentsFile::Sample {
                bins: *bins,
                types: types.clone(),
            },
        };
        Ok(serde_json::to_string_pretty(&MarketFile {
            authorities,
            groups: self.groups,
            agents,
            common_scores: Some(self.is_common_scores()),
        })?)
    }
}
