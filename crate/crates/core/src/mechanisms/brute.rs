//! Exhaustive optimality oracles.
//!
//! With `h` strictly increasing, an optimal allocation admits a top-score
//! prefix of every group, so it is enough to enumerate the admitted count
//! of each group. These oracles need no concavity or derivative.

use crate::economy::{ContinuumEconomy, CutoffAllocation, DiscreteAllocation, DiscreteEconomy, GroupId};
use crate::error::{Error, Result};
use crate::numerics::golden_max;
use crate::preferences::Preferences;

/// Most composition vectors the discrete oracle will enumerate.
pub const MAX_COMPOSITIONS: usize = 1_000_000;

/// Most agents the subset oracle will enumerate.
pub const MAX_SUBSET_AGENTS: usize = 24;

/// Number of count vectors `(x_1, ..., x_M)` with `Σ x_m = q` and
/// `x_m <= n_m`, saturating at `usize::MAX`.
pub fn composition_count(sizes: &[usize], q: usize) -> usize {
    // ways[t] = number of ways to reach total t with the groups seen so far.
    let mut ways = vec![0usize; q + 1];
    ways[0] = 1;
    for &n in sizes {
        let mut next = vec![0usize; q + 1];
        for (t, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for k in 0..=n.min(q - t) {
                next[t + k] = next[t + k].saturating_add(w);
            }
        }
        ways = next;
    }
    ways[q]
}

/// Calls `f` on every count vector that fills the capacity.
pub fn for_each_composition<F>(economy: &DiscreteEconomy, mut f: F) -> Result<()>
where
    F: FnMut(&[usize]) -> Result<()>,
{
    let sizes: Vec<usize> = (0..economy.groups()).map(|m| economy.group_size(GroupId(m))).collect();
    let q = economy.capacity();
    let total = composition_count(&sizes, q);
    if total > MAX_COMPOSITIONS {
        return Err(Error::TooLarge(format!(
            "{total} composition vectors exceed the limit of {MAX_COMPOSITIONS}"
        )));
    }
    // Largest amount the groups from index m onwards can still absorb.
    let mut room = vec![0usize; sizes.len() + 1];
    for m in (0..sizes.len()).rev() {
        room[m] = room[m + 1] + sizes[m];
    }
    let mut counts = vec![0usize; sizes.len()];
    fn rec<F: FnMut(&[usize]) -> Result<()>>(
        m: usize,
        left: usize,
        sizes: &[usize],
        room: &[usize],
        counts: &mut Vec<usize>,
        f: &mut F,
    ) -> Result<()> {
        if m + 1 == sizes.len() {
            if left <= sizes[m] {
                counts[m] = left;
                f(counts)?;
            }
            return Ok(());
        }
        let lo = left.saturating_sub(room[m + 1]);
        for k in lo..=sizes[m].min(left) {
            counts[m] = k;
            rec(m + 1, left - k, sizes, room, counts, f)?;
        }
        Ok(())
    }
    rec(0, q, &sizes, &room, &mut counts, &mut f)
}

/// Utility of a discrete allocation, always evaluated the same way so that
/// equal admitted sets give bit-equal utilities.
pub fn discrete_utility(economy: &DiscreteEconomy, alloc: &DiscreteAllocation, prefs: &Preferences) -> Result<f64> {
    let s = alloc.score_index(economy, &|s| prefs.h().eval(s));
    prefs.utility(s, &alloc.x())
}

/// Exact optimum over all allocations that fill the capacity.
///
/// Ties are resolved in favour of the first composition in lexicographic
/// order.
pub fn brute_force_optimum(economy: &DiscreteEconomy, prefs: &Preferences) -> Result<(DiscreteAllocation, f64)> {
    if prefs.groups() != economy.groups() {
        return Err(Error::invalid("preferences and economy disagree on the number of groups"));
    }
    let mut best: Option<(DiscreteAllocation, f64)> = None;
    for_each_composition(economy, |counts| {
        let alloc = DiscreteAllocation::from_counts(economy, counts)?;
        let u = discrete_utility(economy, &alloc, prefs)?;
        if best.as_ref().map_or(true, |(_, b)| u > *b) {
            best = Some((alloc, u));
        }
        Ok(())
    })?;
    best.ok_or_else(|| Error::invalid("no feasible allocation"))
}

/// Exact optimum over every subset of size `q`, without the prefix
/// shortcut. Limited to small economies.
pub fn brute_force_subsets(economy: &DiscreteEconomy, prefs: &Preferences) -> Result<(DiscreteAllocation, f64)> {
    let n = economy.len();
    if n > MAX_SUBSET_AGENTS {
        return Err(Error::TooLarge(format!("{n} agents exceed the subset limit of {MAX_SUBSET_AGENTS}")));
    }
    let q = economy.capacity() as u32;
    let mut best: Option<(DiscreteAllocation, f64)> = None;
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() != q {
            continue;
        }
        let admitted = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let alloc = DiscreteAllocation::new(economy, admitted)?;
        let u = discrete_utility(economy, &alloc, prefs)?;
        if best.as_ref().map_or(true, |(_, b)| u > *b) {
            best = Some((alloc, u));
        }
    }
    best.ok_or_else(|| Error::invalid("no feasible allocation"))
}

/// Utility of admitting the top `x[m]` mass of every group.
pub fn continuum_utility_at(economy: &ContinuumEconomy, prefs: &Preferences, x: &[f64]) -> Result<f64> {
    let cutoffs = (0..x.len()).map(|m| economy.cutoff_for_mass(GroupId(m), x[m])).collect();
    let alloc = CutoffAllocation::from_cutoffs(economy, cutoffs)?;
    let s = alloc.score_index(economy, &|s| prefs.h().eval(s));
    prefs.utility(s, alloc.x())
}

/// Composition search for the continuum optimum: nested golden-section
/// over the admitted measures `x_1, ..., x_{M-1}`, the last group taking
/// the remainder. Relies on the objective being concave in `x`, which holds
/// for concave `u` and identity `g`.
pub fn continuum_optimum(economy: &ContinuumEconomy, prefs: &Preferences, tol: f64) -> Result<(Vec<f64>, f64)> {
    if prefs.groups() != economy.groups() {
        return Err(Error::invalid("preferences and economy disagree on the number of groups"));
    }
    continuum_optimum_by(economy, tol, &mut |x: &[f64]| continuum_utility_at(economy, prefs, x))
}

/// [`continuum_optimum`] for an arbitrary objective over admitted measures
/// that fill the capacity of `economy`.
pub fn continuum_optimum_by(
    economy: &ContinuumEconomy,
    tol: f64,
    eval: &mut dyn FnMut(&[f64]) -> Result<f64>,
) -> Result<(Vec<f64>, f64)> {
    let g = economy.groups();
    if g > 3 {
        return Err(Error::TooLarge("continuum composition search supports at most 3 groups".into()));
    }
    let masses: Vec<f64> = (0..g).map(|m| economy.group_mass(GroupId(m))).collect();
    let q = economy.capacity();
    fn search(
        m: usize,
        left: f64,
        x: &mut Vec<f64>,
        masses: &[f64],
        tol: f64,
        eval: &mut dyn FnMut(&[f64]) -> Result<f64>,
    ) -> Result<f64> {
        let g = masses.len();
        if m + 1 == g {
            x[m] = left.min(masses[m]);
            return eval(x);
        }
        let rest: f64 = masses[m + 1..].iter().sum();
        let lo = (left - rest).max(0.0);
        let hi = masses[m].min(left);
        let mut inner = |v: f64| {
            let mut y = x.clone();
            y[m] = v;
            search(m + 1, left - v, &mut y, masses, tol, eval)
        };
        let (v, best) = golden_max(lo, hi, tol, &mut inner)?;
        x[m] = v;
        let _ = search(m + 1, left - v, x, masses, tol, eval)?;
        Ok(best)
    }
    let mut x = vec![0.0; g];
    let best = search(0, q, &mut x, &masses, tol, eval)?;
    Ok((x, best))
}
