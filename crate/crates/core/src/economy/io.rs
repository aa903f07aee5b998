use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Agent, Belief, ContinuumEconomy, DiscreteEconomy, Economy, GroupId};

/// A group reference in files: either its name or its index.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentRecord {
    pub score: f64,
    pub group: GroupRef,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityGrid {
    pub bins: usize,
    pub values: Vec<Vec<f64>>,
}

/// File representation of an economy.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EconomyFile {
    Discrete {
        groups: Vec<String>,
        capacity: usize,
        agents: Vec<AgentRecord>,
    },
    Continuum {
        groups: Vec<String>,
        capacity: f64,
        density: DensityGrid,
    },
}

fn resolve(groups: &[String], g: &GroupRef) -> Result<usize> {
    match g {
        GroupRef::Index(i) if *i < groups.len() => Ok(*i),
        GroupRef::Index(i) => Err(Error::invalid(format!("group index {i} out of range"))),
        GroupRef::Name(n) => groups
            .iter()
            .position(|x| x == n)
            .ok_or_else(|| Error::invalid(format!("unknown group name {n:?}"))),
    }
}

impl EconomyFile {
    pub fn into_economy(self) -> Result<Economy> {
        match self {
            EconomyFile::Discrete {
                groups,
                capacity,
                agents,
            } => {
                let agents = agents
                    .iter()
                    .map(|a| Ok(Agent::new(a.score, resolve(&groups, &a.group)?)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Economy::Discrete(DiscreteEconomy::new(groups.len(), agents, capacity)?))
            }
            EconomyFile::Continuum {
                groups,
                capacity,
                density,
            } => {
                if density.values.len() != groups.len() {
                    return Err(Error::invalid("density needs one row per group"));
                }
                if density.values.iter().any(|r| r.len() != density.bins) {
                    return Err(Error::invalid("density rows must have `bins` cells"));
                }
                Ok(Economy::Continuum(ContinuumEconomy::new(density.values, capacity)?))
            }
        }
    }

    /// Describes an economy with generic group names `g0, g1, ...`.
    pub fn from_economy(economy: &Economy) -> Self {
        let names = (0..economy.groups()).map(|m| format!("g{m}")).collect();
        match economy {
            Economy::Discrete(d) => EconomyFile::Discrete {
                groups: names,
                capacity: d.capacity(),
                agents: d
                    .agents()
                    .iter()
                    .map(|a| AgentRecord {
                        score: a.score,
                        group: GroupRef::Index(a.group.0),
                    })
                    .collect(),
            },
            Economy::Continuum(c) => EconomyFile::Continuum {
                groups: names,
                capacity: c.capacity(),
                density: DensityGrid {
                    bins: c.bins(),
                    values: (0..c.groups()).map(|m| c.density(GroupId(m)).to_vec()).collect(),
                },
            },
        }
    }
}

impl Economy {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<EconomyFile>(text)?.into_economy()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&EconomyFile::from_economy(self))?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateEconomy {
    Path(String),
    Inline(EconomyFile),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateRecord {
    pub weight: f64,
    pub economy: StateEconomy,
}

/// File representation of a belief; economies are inline or paths relative
/// to the belief file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeliefFile {
    pub states: Vec<StateRecord>,
    #[serde(default)]
    pub heterogeneous: bool,
}

impl Belief {
    /// Parses a belief; `base` resolves relative economy paths.
    pub fn from_json(text: &str, base: Option<&Path>) -> Result<Self> {
        let file: BeliefFile = serde_json::from_str(text)?;
        let mut states = Vec::with_capacity(file.states.len());
        for s in file.states {
            let economy = match s.economy {
                StateEconomy::Inline(e) => e.into_economy()?,
                StateEconomy::Path(p) => {
                    let path = match base {
                        Some(b) => b.join(&p),
                        None => p.into(),
                    };
                    Economy::from_json(&std::fs::read_to_string(path)?)?
                }
            };
            states.push((economy, s.weight));
        }
        if file.heterogeneous {
            Belief::heterogeneous(states)
        } else {
            Belief::new(states)
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = BeliefFile {
            states: self
                .states()
                .iter()
                .map(|(e, w)| StateRecord {
                    weight: *w,
                    economy: StateEconomy::Inline(EconomyFile::from_economy(e)),
                })
                .collect(),
            heterogeneous: self.is_heterogeneous(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}
