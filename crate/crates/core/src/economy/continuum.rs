use crate::error::{Error, Result};

use super::GroupId;

/// Piecewise-constant densities over `(score, group)` on a uniform grid of
/// `B` cells covering `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumEconomy {
    density: Vec<Vec<f64>>,
    capacity: f64,
    /// `tails[g][k]`: mass of cells `k..B` of group `g`.
    tails: Vec<Vec<f64>>,
}

impl ContinuumEconomy {
    /// Builds an economy from per-group densities (`density[g][cell]`).
    ///
    /// Requires nonnegative finite densities, a common grid, a positive
    /// capacity and total mass of at least the capacity.
    pub fn new(density: Vec<Vec<f64>>, capacity: f64) -> Result<Self> {
        let econ = Self::build(density, capacity)?;
        let total = econ.total_mass();
        if total < capacity * (1.0 - 1e-12) {
            return Err(Error::Infeasible {
                available: total,
                capacity,
            });
        }
        Ok(econ)
    }

    /// Like [`ContinuumEconomy::new`] without the mass-versus-capacity check.
    ///
    /// Induced demand sets in multi-authority markets can fall short of an
    /// authority's capacity.
    pub fn new_unfilled(density: Vec<Vec<f64>>, capacity: f64) -> Result<Self> {
        Self::build(density, capacity)
    }

    fn build(density: Vec<Vec<f64>>, capacity: f64) -> Result<Self> {
        if density.is_empty() {
            return Err(Error::invalid("economy needs at least one group"));
        }
        let bins = density[0].len();
        if bins == 0 {
            return Err(Error::invalid("economy needs at least one grid cell"));
        }
        if density.iter().any(|d| d.len() != bins) {
            return Err(Error::invalid("all groups must share the grid"));
        }
        if density.iter().flatten().any(|&f| !(f >= 0.0) || !f.is_finite()) {
            return Err(Error::invalid("densities must be finite and nonnegative"));
        }
        if !(capacity > 0.0) || !capacity.is_finite() {
            return Err(Error::invalid("capacity must be positive"));
        }
        let w = 1.0 / bins as f64;
        let tails = density
            .iter()
            .map(|d| {
                let mut t = vec![0.0; bins + 1];
                for k in (0..bins).rev() {
                    t[k] = t[k + 1] + d[k] * w;
                }
                t
            })
            .collect();
        Ok(ContinuumEconomy {
            density,
            capacity,
            tails,
        })
    }

    /// Samples `f(group, cell midpoint)` on `bins` cells.
    pub fn from_fn(
        groups: usize,
        bins: usize,
        capacity: f64,
        f: impl Fn(usize, f64) -> f64,
    ) -> Result<Self> {
        let density = (0..groups)
            .map(|g| {
                (0..bins)
                    .map(|k| f(g, (k as f64 + 0.5) / bins as f64))
                    .collect()
            })
            .collect();
        Self::new(density, capacity)
    }

    /// Uniform scores on `[0, 1]` with the given group masses.
    pub fn uniform(masses: &[f64], bins: usize, capacity: f64) -> Result<Self> {
        Self::from_fn(masses.len(), bins, capacity, |g, _| masses[g])
    }

    pub fn groups(&self) -> usize {
        self.density.len()
    }

    pub fn bins(&self) -> usize {
        self.density[0].len()
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.bins() as f64
    }

    pub fn density(&self, group: GroupId) -> &[f64] {
        &self.density[group.0]
    }

    pub fn densities(&self) -> &[Vec<f64>] {
        &self.density
    }

    pub fn group_mass(&self, group: GroupId) -> f64 {
        self.tails[group.0][0]
    }

    pub fn total_mass(&self) -> f64 {
        self.tails.iter().map(|t| t[0]).sum()
    }

    /// Same densities with a different capacity.
    pub fn with_capacity(&self, capacity: f64) -> Result<Self> {
        Self::new(self.density.clone(), capacity)
    }

    #[inline]
    fn cell_of(&self, c: f64) -> usize {
        let b = self.bins();
        ((c * b as f64).floor() as usize).min(b - 1)
    }

    #[inline]
    fn cell_hi(&self, k: usize) -> f64 {
        (k + 1) as f64 / self.bins() as f64
    }

    /// Mass of `group` with score at least `cutoff`.
    ///
    /// Midpoint rule over whole cells plus linear interpolation inside the
    /// cell containing the cutoff. The cutoff is clamped to `[0, 1]`.
    #[inline]
    pub fn mass_above(&self, group: GroupId, cutoff: f64) -> f64 {
        let c = cutoff.clamp(0.0, 1.0);
        if c >= 1.0 {
            return 0.0;
        }
        let g = group.0;
        let k = self.cell_of(c);
        self.tails[g][k + 1] + self.density[g][k] * (self.cell_hi(k) - c)
    }

    /// Mass of `group` with score in `[lo, hi)`.
    pub fn mass_between(&self, group: GroupId, lo: f64, hi: f64) -> f64 {
        (self.mass_above(group, lo) - self.mass_above(group, hi)).max(0.0)
    }

    /// `∫_cutoff^1 h(s) f(s, group) ds` with the quadrature of
    /// [`ContinuumEconomy::mass_above`]: full cells at their midpoints, the
    /// partial cell at the midpoint of its admitted part.
    pub fn score_above(&self, group: GroupId, cutoff: f64, h: &dyn Fn(f64) -> f64) -> f64 {
        let c = cutoff.clamp(0.0, 1.0);
        if c >= 1.0 {
            return 0.0;
        }
        let g = group.0;
        let b = self.bins();
        let w = self.cell_width();
        let k = self.cell_of(c);
        let hi = self.cell_hi(k);
        let mut total = 0.0;
        for j in (k + 1..b).rev() {
            let f = self.density[g][j];
            if f != 0.0 {
                total += f * w * h((j as f64 + 0.5) * w);
            }
        }
        let f = self.density[g][k];
        if f != 0.0 && hi > c {
            total += f * (hi - c) * h(0.5 * (c + hi));
        }
        total
    }

    /// Highest cutoff whose upper tail in `group` has the given mass.
    ///
    /// Inverts [`ContinuumEconomy::mass_above`]; masses outside
    /// `[0, group mass]` are clamped.
    pub fn cutoff_for_mass(&self, group: GroupId, mass: f64) -> f64 {
        let g = group.0;
        let t = &self.tails[g];
        if mass <= 0.0 {
            return 1.0;
        }
        if mass >= t[0] {
            // Lowest score with positive density, so zero-density floors stay
            // out of the admitted region.
            let first = self.density[g].iter().position(|&f| f > 0.0).unwrap_or(0);
            return first as f64 * self.cell_width();
        }
        // Find k with t[k+1] < mass <= t[k].
        let (mut lo, mut hi) = (0usize, self.bins());
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t[mid] >= mass {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let k = lo;
        let f = self.density[g][k];
        let top = self.cell_hi(k);
        if f <= 0.0 {
            return top;
        }
        let c = top - (mass - t[k + 1]) / f;
        c.clamp(k as f64 * self.cell_width(), top)
    }
}
