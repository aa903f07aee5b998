use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::clearing::{clear, Rank};
use crate::economy::{Allocation, ContinuumEconomy, CutoffAllocation, DiscreteAllocation, DiscreteEconomy, Economy, GroupId, Mechanism};
use crate::error::{Error, Result};
use crate::preferences::{DiversityUtility, Preferences, ScoreTransform};

/// Side of the sampled grid used to check user-supplied priorities.
pub const MONOTONE_GRID: usize = 64;

/// A shared function of `(admitted, score)`.
#[derive(Clone)]
pub struct Func2(pub Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

impl Func2 {
    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Func2(Arc::new(f))
    }
}

impl fmt::Debug for Func2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<fn>")
    }
}

/// The priority map `A_m(y, s)` of one group.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum PriorityMap {
    /// `h(s) + u'(y)`, compared in transformed score units.
    Marginal { h: ScoreTransform, u: DiversityUtility },
    /// `h(s) + u(y) - u(y - 1)` for integer counts `y >= 1`.
    Increment { h: ScoreTransform, u: DiversityUtility },
    /// `s + boosts[i]` where `i` counts the breakpoints strictly below `y`.
    Steps { breaks: Vec<f64>, boosts: Vec<f64> },
    /// Bilinear interpolation of `values[i][j]` at `(ys[i], ss[j])`.
    Tabulated { ys: Vec<f64>, ss: Vec<f64>, values: Vec<Vec<f64>> },
    #[serde(skip)]
    Custom(Func2),
}

fn bracket(grid: &[f64], v: f64) -> (usize, f64) {
    let n = grid.len();
    if n == 1 {
        return (0, 0.0);
    }
    let i = match grid.iter().position(|&g| g > v) {
        Some(0) => 0,
        Some(i) => i - 1,
        None => n - 2,
    }
    .min(n - 2);
    let t = ((v - grid[i]) / (grid[i + 1] - grid[i])).clamp(0.0, 1.0);
    (i, t)
}

impl PriorityMap {
    #[inline]
    pub fn eval(&self, y: f64, s: f64) -> f64 {
        match self {
            PriorityMap::Marginal { h, u } => h.eval(s) + u.derivative(y),
            PriorityMap::Increment { h, u } => {
                let k = y.round().max(1.0) as usize;
                h.eval(s) + u.increment(k)
            }
            PriorityMap::Steps { breaks, boosts } => {
                let i = breaks.iter().filter(|&&b| y > b).count();
                s + boosts[i.min(boosts.len() - 1)]
            }
            PriorityMap::Tabulated { ys, ss, values } => {
                let (i, ty) = bracket(ys, y);
                let (j, ts) = bracket(ss, s);
                let at = |a: usize, b: usize| values[a.min(ys.len() - 1)][b.min(ss.len() - 1)];
                let v0 = at(i, j) + ts * (at(i, j + 1) - at(i, j));
                let v1 = at(i + 1, j) + ts * (at(i + 1, j + 1) - at(i + 1, j));
                v0 + ty * (v1 - v0)
            }
            PriorityMap::Custom(f) => (f.0)(y, s),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            PriorityMap::Steps { breaks, boosts } if boosts.len() != breaks.len() + 1 => {
                Err(Error::invalid("step priority needs one more boost than breakpoints"))
            }
            PriorityMap::Tabulated { ys, ss, values }
                if ys.is_empty() || ss.len() < 2 || values.len() != ys.len() || values.iter().any(|r| r.len() != ss.len()) =>
            {
                Err(Error::invalid("tabulated priority grid has inconsistent dimensions"))
            }
            _ => Ok(()),
        }
    }
}

/// An adaptive priority policy: one map per group plus a monotonicity flag.
///
/// Monotone means nonincreasing in the admitted amount `y` and strictly
/// increasing in the score `s`. Built-in optimal policies are monotone by
/// construction; other maps are checked on a 64 by 64 grid.
#[derive(Debug, Clone)]
pub struct AdaptivePriority {
    maps: Vec<PriorityMap>,
    monotone: bool,
    display: Option<ScoreTransform>,
}

impl AdaptivePriority {
    /// Wraps user maps and samples them for monotonicity over
    /// `y ∈ [0, y_max]`, `s ∈ [0, 1]`.
    pub fn new(maps: Vec<PriorityMap>, y_max: f64) -> Result<Self> {
        for m in &maps {
            m.validate()?;
        }
        let monotone = maps.iter().all(|m| sampled_monotone(m, y_max));
        Ok(AdaptivePriority {
            maps,
            monotone,
            display: None,
        })
    }

    pub fn maps(&self) -> &[PriorityMap] {
        &self.maps
    }

    pub fn groups(&self) -> usize {
        self.maps.len()
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    /// Priority of a group-`m` agent with score `s` when `y` of the group is
    /// admitted.
    #[inline]
    pub fn rank(&self, m: usize, y: f64, s: f64) -> f64 {
        self.maps[m].eval(y, s)
    }

    /// The priority in score units, `h^{-1}(rank)`, clamped to `[0, 1]`.
    pub fn display(&self, m: usize, y: f64, s: f64) -> Result<(f64, bool)> {
        let r = self.rank(m, y, s);
        match &self.display {
            Some(h) => {
                let inv = h.inverse(r)?;
                Ok((inv.value, inv.clamped))
            }
            None => Ok((r, false)),
        }
    }

    pub fn require_monotone(&self) -> Result<()> {
        if self.monotone {
            Ok(())
        } else {
            Err(Error::NotMonotone(
                "adaptive priority must decrease in admissions and increase in score; \
                 use the fixed-point scan for non-monotone policies"
                    .into(),
            ))
        }
    }
}

fn sampled_monotone(map: &PriorityMap, y_max: f64) -> bool {
    let n = MONOTONE_GRID;
    let y_at = |i: usize| y_max * i as f64 / (n - 1) as f64;
    let s_at = |j: usize| j as f64 / (n - 1) as f64;
    for i in 0..n {
        for j in 0..n {
            let v = map.eval(y_at(i), s_at(j));
            if j + 1 < n && !(map.eval(y_at(i), s_at(j + 1)) > v) {
                return false;
            }
            if i + 1 < n && map.eval(y_at(i + 1), s_at(j)) > v {
                return false;
            }
        }
    }
    true
}

/// The first-best adaptive priority `A*_m(y, s) = h^{-1}(h(s) + u_m'(y))`.
///
/// Ranks are compared in transformed units `h(s) + u_m'(y)`, which may leave
/// the range of `h`. The result depends only on preferences, never on a
/// belief or on the aggregator `g`.
///
/// ```
/// use apm_core::mechanisms::optimal_apm;
/// use apm_core::preferences::{DiversityUtility, Preferences, ScoreTransform};
///
/// let u = DiversityUtility::LinearQuadratic { gamma: 0.5, beta: 1.0 };
/// let prefs = Preferences::new(ScoreTransform::Identity, vec![u, DiversityUtility::zero()]).unwrap();
/// let apm = optimal_apm(&prefs).unwrap();
/// // boost gamma (1 - beta y) on group 0
/// assert!((apm.rank(0, 0.2, 0.3) - (0.3 + 0.5 * 0.8)).abs() < 1e-12);
/// ```
pub fn optimal_apm(prefs: &Preferences) -> Result<AdaptivePriority> {
    let us = prefs.separable()?;
    for (m, u) in us.iter().enumerate() {
        if !u.is_concave(1.0) {
            return Err(Error::NotConcave { group: m });
        }
    }
    Ok(AdaptivePriority {
        maps: us
            .iter()
            .map(|u| PriorityMap::Marginal {
                h: prefs.h().clone(),
                u: u.clone(),
            })
            .collect(),
        monotone: true,
        display: Some(prefs.h().clone()),
    })
}

/// The discrete first-best priority `h(s) + u_m(y) - u_m(y - 1)`.
pub fn optimal_discrete_apm(prefs: &Preferences) -> Result<AdaptivePriority> {
    let us = prefs.separable()?;
    for (m, u) in us.iter().enumerate() {
        if !u.is_concave(1.0) {
            return Err(Error::NotConcave { group: m });
        }
    }
    Ok(AdaptivePriority {
        maps: us
            .iter()
            .map(|u| PriorityMap::Increment {
                h: prefs.h().clone(),
                u: u.clone(),
            })
            .collect(),
        monotone: true,
        display: Some(prefs.h().clone()),
    })
}

/// Runs the greedy adaptive-priority algorithm on a continuum economy.
///
/// Each type is ranked by `A_m(x̄, s)` where `x̄` is the mass of its group
/// scoring above it; everything ranked above the market-clearing threshold
/// is admitted and the marginal rank is rationed. The resource is filled
/// exactly and the fixed-point property is checked afterwards.
pub fn run_apm_greedy(apm: &AdaptivePriority, economy: &ContinuumEconomy) -> Result<CutoffAllocation> {
    apm.require_monotone()?;
    if apm.groups() != economy.groups() {
        return Err(Error::invalid("policy and economy disagree on the number of groups"));
    }
    let q = economy.capacity();
    let total = economy.total_mass();
    if total < q * (1.0 - 1e-12) {
        return Err(Error::Infeasible {
            available: total,
            capacity: q,
        });
    }
    let ranks: Vec<Rank<'_>> = (0..apm.groups())
        .map(|m| {
            let g = GroupId(m);
            Box::new(move |c: f64| apm.rank(m, economy.mass_above(g, c), c)) as Rank<'_>
        })
        .collect();
    let tops = vec![1.0; apm.groups()];
    let cleared = clear(economy, &ranks, &tops, q)?;
    let alloc = CutoffAllocation::new(economy, cleared.cutoffs, cleared.floors, cleared.fractions)?;
    check_fixed_point(apm, economy, &alloc)?;
    Ok(alloc)
}

/// Position of `s` in cell units, snapped to an edge when within rounding.
fn cell_position(economy: &ContinuumEconomy, s: f64) -> f64 {
    let k = s / economy.cell_width();
    if (k - k.round()).abs() < 1e-9 {
        k.round()
    } else {
        k
    }
}

/// Lowest score at or above `s` where group `g` has positive density.
fn support_from(economy: &ContinuumEconomy, g: GroupId, s: f64) -> f64 {
    let d = economy.density(g);
    let w = economy.cell_width();
    let first = (cell_position(economy, s).floor().max(0.0) as usize).min(d.len() - 1);
    match (first..d.len()).find(|&k| d[k] > 0.0) {
        Some(k) if k == first => s,
        Some(k) => k as f64 * w,
        None => s,
    }
}

/// Highest score at or below `s` where group `g` has positive density.
fn support_to(economy: &ContinuumEconomy, g: GroupId, s: f64) -> f64 {
    let d = economy.density(g);
    let w = economy.cell_width();
    let last = ((cell_position(economy, s).ceil().max(1.0) as usize) - 1).min(d.len() - 1);
    match (0..=last).rev().find(|&k| d[k] > 0.0) {
        Some(k) if k == last => s,
        Some(k) => (k + 1) as f64 * w,
        None => s,
    }
}

/// Verifies that admitted marginal priorities weakly exceed rejected ones
/// at the final admitted measures. Scores are taken where agents exist, so
/// cutoffs inside gaps of a group's support are not penalised.
pub fn check_fixed_point(apm: &AdaptivePriority, economy: &ContinuumEconomy, alloc: &CutoffAllocation) -> Result<()> {
    let x = alloc.x();
    let mut worst_in = f64::INFINITY;
    let mut best_out = f64::NEG_INFINITY;
    for m in 0..apm.groups() {
        let g = GroupId(m);
        if x[m] > 1e-12 {
            worst_in = worst_in.min(apm.rank(m, x[m], support_from(economy, g, alloc.cutoffs()[m])));
        }
        let left = economy.group_mass(g) - x[m];
        if left > 1e-12 {
            let below = support_to(economy, g, alloc.floors()[m]);
            best_out = best_out.max(apm.rank(m, x[m] + 1e-9, below));
        }
    }
    if worst_in.is_finite() && best_out.is_finite() {
        let tol = 1e-6 * (1.0 + worst_in.abs().max(best_out.abs()));
        if best_out > worst_in + tol {
            return Err(Error::Integrity(format!(
                "greedy outcome is not a fixed point: rejected priority {best_out} above admitted {worst_in}"
            )));
        }
    }
    Ok(())
}

/// Greedy adaptive-priority admission on a discrete economy.
///
/// Admits, `q` times, the best remaining agent of the group whose next
/// admission carries the highest priority `A_m(x_m + 1, s)`. The result is
/// checked against both swap conditions of the discrete definition.
pub fn run_apm_discrete(apm: &AdaptivePriority, economy: &DiscreteEconomy) -> Result<DiscreteAllocation> {
    if apm.groups() != economy.groups() {
        return Err(Error::invalid("policy and economy disagree on the number of groups"));
    }
    let agents = economy.agents();
    let groups = economy.groups();
    let mut counts = vec![0usize; groups];
    for _ in 0..economy.capacity() {
        let mut best: Option<(usize, f64, f64)> = None;
        for m in 0..groups {
            let ranked = economy.ranked(GroupId(m));
            if counts[m] >= ranked.len() {
                continue;
            }
            let s = agents[ranked[counts[m]]].score;
            let r = apm.rank(m, (counts[m] + 1) as f64, s);
            let better = match best {
                None => true,
                Some((_, br, bs)) => r > br || (r == br && s > bs),
            };
            if better {
                best = Some((m, r, s));
            }
        }
        match best {
            Some((m, _, _)) => counts[m] += 1,
            None => return Err(Error::invalid("capacity exceeds the number of agents")),
        }
    }
    let alloc = DiscreteAllocation::from_counts(economy, &counts)?;
    check_discrete_conditions(apm, economy, &alloc)?;
    Ok(alloc)
}

/// True when an allocation satisfies the discrete implementation
/// conditions: admitted agents weakly outrank rejected agents of other
/// groups evaluated with one more admission, and outscore rejected agents of
/// their own group.
pub fn satisfies_discrete_conditions(apm: &AdaptivePriority, economy: &DiscreteEconomy, alloc: &DiscreteAllocation) -> bool {
    if !alloc.has_cutoff_structure(economy) {
        return false;
    }
    if alloc.counts().iter().sum::<usize>() != economy.capacity() {
        return false;
    }
    let agents = economy.agents();
    let counts = alloc.counts();
    for m in 0..economy.groups() {
        let rm = economy.ranked(GroupId(m));
        if counts[m] == 0 {
            continue;
        }
        let lowest_in = agents[rm[counts[m] - 1]].score;
        let a_in = apm.rank(m, counts[m] as f64, lowest_in);
        for n in 0..economy.groups() {
            if n == m {
                continue;
            }
            let rn = economy.ranked(GroupId(n));
            if counts[n] < rn.len() {
                let best_out = agents[rn[counts[n]]].score;
                if apm.rank(n, (counts[n] + 1) as f64, best_out) > a_in {
                    return false;
                }
            }
        }
    }
    true
}

fn check_discrete_conditions(apm: &AdaptivePriority, economy: &DiscreteEconomy, alloc: &DiscreteAllocation) -> Result<()> {
    if satisfies_discrete_conditions(apm, economy, alloc) {
        Ok(())
    } else {
        Err(Error::Integrity("greedy outcome violates the discrete swap conditions".into()))
    }
}

/// Every cutoff allocation of a small discrete economy that a (possibly
/// non-monotone) policy implements.
///
/// Scans all composition vectors; the mechanism does not pick among them.
pub fn discrete_fixed_points(apm: &AdaptivePriority, economy: &DiscreteEconomy) -> Result<Vec<DiscreteAllocation>> {
    let mut out = Vec::new();
    super::brute::for_each_composition(economy, |counts| {
        let alloc = DiscreteAllocation::from_counts(economy, counts)?;
        if satisfies_discrete_conditions(apm, economy, &alloc) {
            out.push(alloc);
        }
        Ok(())
    })?;
    Ok(out)
}

impl Mechanism for AdaptivePriority {
    fn allocate(&self, economy: &Economy) -> Result<Allocation> {
        match economy {
            Economy::Continuum(c) => run_apm_greedy(self, c).map(Allocation::from),
            Economy::Discrete(d) => run_apm_discrete(self, d).map(Allocation::from),
        }
    }
}
