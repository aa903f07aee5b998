//! Authority preferences over scores and group representation.
//!
//! An authority values an allocation through `g(s̄_h + Σ_m u_m(x_m))`, where
//! `s̄_h` integrates the score transform `h` over admitted agents and `x_m` is
//! the admitted measure (or count) of group `m`.

mod diversity;
mod transform;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use diversity::{DiversityUtility, UtilityKind, CPS_TARGET, FD_STEP};
pub use transform::{Aggregator, Func, Inverse, ScoreTransform};

use crate::error::{Error, Result};

/// A shared function of the admitted-measure vector.
#[derive(Clone)]
pub struct VecFunc(pub Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>);

impl VecFunc {
    pub fn new(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        VecFunc(Arc::new(f))
    }
}

impl fmt::Debug for VecFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<fn>")
    }
}

/// A jointly concave diversity utility `u(x)` over all groups.
#[derive(Debug, Clone)]
pub struct NonSeparableDiversity {
    groups: usize,
    u: VecFunc,
    partials: Option<Vec<VecFunc>>,
}

impl NonSeparableDiversity {
    /// Builds the utility and spot-checks concavity with seeded random
    /// midpoint tests on `[0, 1]^groups`.
    pub fn new(groups: usize, u: VecFunc, partials: Option<Vec<VecFunc>>) -> Result<Self> {
        if let Some(p) = &partials {
            if p.len() != groups {
                return Err(Error::invalid("one partial derivative per group is required"));
            }
        }
        let d = NonSeparableDiversity { groups, u, partials };
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..256 {
            let a: Vec<f64> = (0..groups).map(|_| rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..groups).map(|_| rng.gen::<f64>()).collect();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            if d.value(&mid) < 0.5 * d.value(&a) + 0.5 * d.value(&b) - 1e-9 {
                return Err(Error::invalid("non-separable diversity utility fails a midpoint concavity test"));
            }
        }
        Ok(d)
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.u.0)(x)
    }

    /// `∂u/∂x_m`, by central differences when no analytic partial was given.
    pub fn partial(&self, x: &[f64], m: usize) -> f64 {
        if let Some(p) = &self.partials {
            return (p[m].0)(x);
        }
        let mut up = x.to_vec();
        let mut dn = x.to_vec();
        up[m] += FD_STEP;
        dn[m] -= FD_STEP;
        (self.value(&up) - self.value(&dn)) / (2.0 * FD_STEP)
    }
}

/// Which diversity representation an authority uses.
#[derive(Debug, Clone)]
pub enum Diversity {
    Separable(Vec<DiversityUtility>),
    NonSeparable(NonSeparableDiversity),
}

/// Authority preferences `(h, g, u)`.
#[derive(Debug, Clone)]
pub struct Preferences {
    h: ScoreTransform,
    g: Aggregator,
    diversity: Diversity,
}

impl Preferences {
    /// Separable preferences with identity aggregator.
    ///
    /// Validates that `h` is strictly increasing and each `u_m` concave on
    /// `[0, 1]`.
    pub fn new(h: ScoreTransform, utilities: Vec<DiversityUtility>) -> Result<Self> {
        h.validate()?;
        if utilities.is_empty() {
            return Err(Error::invalid("preferences need at least one group"));
        }
        for (m, u) in utilities.iter().enumerate() {
            u.validate(1.0).map_err(|e| match e {
                Error::Invalid(msg) if msg.contains("not concave") => Error::NotConcave { group: m },
                other => other,
            })?;
        }
        Ok(Preferences {
            h,
            g: Aggregator::Identity,
            diversity: Diversity::Separable(utilities),
        })
    }

    /// Like [`Preferences::new`] but accepts non-concave utilities.
    ///
    /// Only the brute-force oracle can optimise such preferences.
    pub fn new_unchecked(h: ScoreTransform, utilities: Vec<DiversityUtility>) -> Result<Self> {
        h.validate()?;
        Ok(Preferences {
            h,
            g: Aggregator::Identity,
            diversity: Diversity::Separable(utilities),
        })
    }

    pub fn non_separable(h: ScoreTransform, u: NonSeparableDiversity) -> Result<Self> {
        h.validate()?;
        Ok(Preferences {
            h,
            g: Aggregator::Identity,
            diversity: Diversity::NonSeparable(u),
        })
    }

    /// Score-only preferences for `groups` groups.
    pub fn merit(groups: usize) -> Self {
        Preferences {
            h: ScoreTransform::Identity,
            g: Aggregator::Identity,
            diversity: Diversity::Separable(vec![DiversityUtility::zero(); groups]),
        }
    }

    pub fn with_aggregator(mut self, g: Aggregator) -> Self {
        self.g = g;
        self
    }

    pub fn h(&self) -> &ScoreTransform {
        &self.h
    }

    pub fn g(&self) -> &Aggregator {
        &self.g
    }

    pub fn diversity(&self) -> &Diversity {
        &self.diversity
    }

    pub fn groups(&self) -> usize {
        match &self.diversity {
            Diversity::Separable(u) => u.len(),
            Diversity::NonSeparable(n) => n.groups(),
        }
    }

    /// Per-group utilities, or an error for non-separable preferences.
    pub fn separable(&self) -> Result<&[DiversityUtility]> {
        match &self.diversity {
            Diversity::Separable(u) => Ok(u),
            Diversity::NonSeparable(_) => Err(Error::invalid(
                "operation requires separable diversity preferences",
            )),
        }
    }

    /// The utility of group `m`; panics for non-separable preferences.
    pub fn utility_of(&self, m: usize) -> &DiversityUtility {
        match &self.diversity {
            Diversity::Separable(u) => &u[m],
            Diversity::NonSeparable(_) => panic!("utility_of called on non-separable preferences"),
        }
    }

    /// `h^{-1}(v)` with clamp reporting.
    pub fn h_inverse(&self, v: f64) -> Result<Inverse> {
        self.h.inverse(v)
    }

    /// The quasi-linear index `s̄_h + Σ u_m(x_m)` before `g`.
    pub fn index(&self, score_index: f64, x: &[f64]) -> Result<f64> {
        if x.len() != self.groups() {
            return Err(Error::invalid(format!(
                "allocation has {} groups, preferences have {}",
                x.len(),
                self.groups()
            )));
        }
        let div = match &self.diversity {
            Diversity::Separable(u) => u.iter().zip(x).map(|(u, &x)| u.value(x)).sum::<f64>(),
            Diversity::NonSeparable(n) => n.value(x),
        };
        Ok(score_index + div)
    }

    /// `g(s̄_h + Σ u_m(x_m))`.
    pub fn utility(&self, score_index: f64, x: &[f64]) -> Result<f64> {
        Ok(self.g.eval(self.index(score_index, x)?))
    }

    /// Marginal diversity value of group `m` at `x`.
    pub fn marginal(&self, m: usize, x: &[f64]) -> f64 {
        match &self.diversity {
            Diversity::Separable(u) => u[m].derivative(x[m]),
            Diversity::NonSeparable(n) => n.partial(x, m),
        }
    }

    /// True when representation concerns do not always dominate scores:
    /// `h(1) + u_n'(0) > h(0) + u_m'(q)` for every pair of distinct groups.
    pub fn is_nontrivial(&self, capacity: f64) -> Result<bool> {
        let u = self.separable()?;
        let (h0, h1) = (self.h.eval(0.0), self.h.eval(1.0));
        for (m, um) in u.iter().enumerate() {
            for (n, un) in u.iter().enumerate() {
                if m != n && !(h1 + un.derivative(0.0) > h0 + um.derivative(capacity)) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Groups for which `h(0) + u_m'(q) < 0`, i.e. the authority would
    /// rather leave capacity idle than admit the lowest score.
    pub fn full_allocation_warnings(&self, capacity: f64) -> Vec<usize> {
        match &self.diversity {
            Diversity::Separable(u) => u
                .iter()
                .enumerate()
                .filter(|(_, u)| self.h.eval(0.0) + u.derivative(capacity) < 0.0)
                .map(|(m, _)| m)
                .collect(),
            Diversity::NonSeparable(_) => Vec::new(),
        }
    }

    /// Serializable description, when every component is a built-in family.
    pub fn spec(&self) -> Option<PreferencesSpec> {
        if matches!(self.h, ScoreTransform::Custom(_)) || matches!(self.g, Aggregator::Custom(_)) {
            return None;
        }
        match &self.diversity {
            Diversity::Separable(u) => {
                if u.iter().any(|u| u.kind() == UtilityKind::Custom) {
                    return None;
                }
                Some(PreferencesSpec {
                    h: self.h.clone(),
                    g: self.g.clone(),
                    groups: u.clone(),
                })
            }
            Diversity::NonSeparable(_) => None,
        }
    }
}

/// File representation of separable preferences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreferencesSpec {
    #[serde(default)]
    pub h: ScoreTransform,
    #[serde(default)]
    pub g: Aggregator,
    pub groups: Vec<DiversityUtility>,
}

impl TryFrom<PreferencesSpec> for Preferences {
    type Error = Error;

    fn try_from(spec: PreferencesSpec) -> Result<Self> {
        Ok(Preferences::new(spec.h, spec.groups)?.with_aggregator(spec.g))
    }
}

impl Preferences {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: PreferencesSpec = serde_json::from_str(text)?;
        spec.try_into()
    }
}
