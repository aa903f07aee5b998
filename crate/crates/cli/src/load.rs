use std::path::Path;

use anyhow::{Context, Result};
use apm_core::economy::{Belief, Economy, EconomyFile};
use apm_core::market::MultiAuthorityEconomy;
use apm_core::mechanisms::{NamedPolicy, PolicySpec};
use apm_core::preferences::Preferences;
use serde::de::DeserializeOwned;

use crate::output::Run;

fn parse<T: DeserializeOwned>(text: &str, what: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).with_context(|| format!("parsing {what} file {}", path.display()))
}

/// The economy and its group names.
pub fn economy(run: &mut Run, path: &Path) -> Result<(Economy, Vec<String>)> {
    let text = run.read_input("economy", path)?;
    let file: EconomyFile = parse(&text, "economy", path)?;
    let names = match &file {
        EconomyFile::Discrete { groups, .. } | EconomyFile::Continuum { groups, .. } => groups.clone(),
    };
    let economy = file
        .into_economy()
        .with_context(|| format!("invalid economy in {}", path.display()))?;
    Ok((economy, names))
}

pub fn prefs(run: &mut Run, path: &Path) -> Result<Preferences> {
    let text = run.read_input("preferences", path)?;
    Preferences::from_json(&text).with_context(|| format!("invalid preferences in {}", path.display()))
}

pub fn policy(run: &mut Run, path: &Path) -> Result<PolicySpec> {
    let text = run.read_input("policy", path)?;
    parse(&text, "policy", path)
}

pub fn policy_set(run: &mut Run, path: &Path) -> Result<Vec<NamedPolicy>> {
    let text = run.read_input("policy-set", path)?;
    let set: Vec<NamedPolicy> = parse(&text, "policy set", path)?;
    if set.is_empty() {
        anyhow::bail!(apm_core::Error::Invalid("the policy set is empty".into()));
    }
    Ok(set)
}

pub fn belief(run: &mut Run, path: &Path) -> Result<Belief> {
    let text = run.read_input("belief", path)?;
    Belief::from_json(&text, path.parent()).with_context(|| format!("invalid belief in {}", path.display()))
}

pub fn market(run: &mut Run, path: &Path) -> Result<MultiAuthorityEconomy> {
    let text = run.read_input("market", path)?;
    MultiAuthorityEconomy::from_json(&text).with_context(|| format!("invalid market in {}", path.display()))
}

pub fn json<T: DeserializeOwned>(run: &mut Run, role: &str, path: &Path) -> Result<T> {
    let text = run.read_input(role, path)?;
    parse(&text, role, path)
}
