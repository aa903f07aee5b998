//! Market clearing on a common priority threshold.
//!
//! Every group exposes the rank of its marginal agent as a function of the
//! group cutoff, nondecreasing in the cutoff. Clearing finds the threshold
//! `t` at which the mass ranked at or above `t` meets the amount to fill,
//! then rations proportionally among agents whose rank ties with `t`.

use crate::economy::{ContinuumEconomy, GroupId};
use crate::error::{Error, Result};

/// Bands narrower than this are treated as rounding, not as rank ties.
const TIE_WIDTH: f64 = 1e-9;

/// Per-group outcome of one clearing round.
#[derive(Debug, Clone)]
pub(crate) struct Cleared {
    pub cutoffs: Vec<f64>,
    pub floors: Vec<f64>,
    pub fractions: Vec<f64>,
    /// Mass admitted in this round, per group.
    pub admitted: Vec<f64>,
}

pub(crate) type Rank<'a> = Box<dyn Fn(f64) -> f64 + 'a>;

/// Lowest cutoff in `[0, top]` whose rank reaches `t`.
fn lower_cut(rank: &dyn Fn(f64) -> f64, top: f64, t: f64) -> f64 {
    if top <= 0.0 || rank(0.0) >= t {
        return 0.0;
    }
    if !(rank(top) >= t) {
        return top;
    }
    let (mut lo, mut hi) = (0.0_f64, top);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if rank(mid) >= t {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Admits `amount` from the regions below each group's `top`, highest rank
/// first.
///
/// When less than `amount` is available, everything available is admitted.
pub(crate) fn clear(
    economy: &ContinuumEconomy,
    ranks: &[Rank<'_>],
    tops: &[f64],
    amount: f64,
) -> Result<Cleared> {
    let groups = ranks.len();
    let avail = |m: usize, c: f64| economy.mass_between(GroupId(m), c, tops[m]);
    let demand = |t: f64| -> f64 { (0..groups).map(|m| avail(m, lower_cut(&*ranks[m], tops[m], t))).sum() };

    let available: f64 = (0..groups).map(|m| avail(m, 0.0)).sum();
    if amount <= 0.0 {
        return Ok(Cleared {
            cutoffs: tops.to_vec(),
            floors: tops.to_vec(),
            fractions: vec![0.0; groups],
            admitted: vec![0.0; groups],
        });
    }
    if available <= amount {
        return Ok(finish(economy, tops, vec![0.0; groups], vec![0.0; groups], 0.0));
    }

    let mut lo = (0..groups)
        .map(|m| ranks[m](0.0))
        .fold(f64::INFINITY, f64::min);
    if !lo.is_finite() {
        return Err(Error::invalid("priority at the lowest score is not finite"));
    }
    // Make the lower bracket strict so that demand(lo) covers everything.
    lo -= 1.0 + lo.abs() * 1e-12;
    let mut hi = (0..groups)
        .map(|m| ranks[m](tops[m]))
        .filter(|v| v.is_finite())
        .fold(lo + 1.0, f64::max);
    let mut step = 1.0 + hi.abs();
    let mut expansions = 0;
    while demand(hi) > amount {
        hi += step;
        step *= 2.0;
        expansions += 1;
        if expansions > 1100 || !hi.is_finite() {
            return Err(Error::NoConvergence {
                iterations: expansions,
                residual: demand(hi) - amount,
            });
        }
    }
    // Invariant: demand(lo) > amount >= demand(hi).
    for _ in 0..400 {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if demand(mid) > amount {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let cut_hi: Vec<f64> = (0..groups).map(|m| lower_cut(&*ranks[m], tops[m], hi)).collect();
    let cut_lo: Vec<f64> = (0..groups).map(|m| lower_cut(&*ranks[m], tops[m], lo)).collect();
    let m_hi: f64 = (0..groups).map(|m| avail(m, cut_hi[m])).sum();
    let m_lo: f64 = (0..groups).map(|m| avail(m, cut_lo[m])).sum();
    let share = if m_lo > m_hi {
        ((amount - m_hi) / (m_lo - m_hi)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(finish(economy, tops, cut_hi, cut_lo, share))
}

/// Turns bracketing cutoffs into the round's allocation, collapsing
/// rounding-width bands into a single interpolated cutoff.
fn finish(economy: &ContinuumEconomy, tops: &[f64], cut_hi: Vec<f64>, cut_lo: Vec<f64>, share: f64) -> Cleared {
    let groups = tops.len();
    let mut out = Cleared {
        cutoffs: vec![0.0; groups],
        floors: vec![0.0; groups],
        fractions: vec![0.0; groups],
        admitted: vec![0.0; groups],
    };
    for m in 0..groups {
        let g = GroupId(m);
        let above_top = economy.mass_above(g, tops[m]);
        let strict = economy.mass_between(g, cut_hi[m], tops[m]);
        let band = economy.mass_between(g, cut_lo[m], cut_hi[m]);
        let take = strict + share * band;
        if cut_hi[m] - cut_lo[m] > TIE_WIDTH && band > 1e-14 && share > 0.0 && share < 1.0 {
            out.cutoffs[m] = cut_hi[m];
            out.floors[m] = cut_lo[m];
            out.fractions[m] = share;
        } else {
            let c = if take <= 0.0 {
                tops[m]
            } else {
                economy.cutoff_for_mass(g, above_top + take).min(tops[m])
            };
            out.cutoffs[m] = c;
            out.floors[m] = c;
        }
        out.admitted[m] = take;
    }
    out
}

/// Clearing for ranks of the form `score + shifts[m]`, which invert in
/// closed form. Used for merit rounds and additive boosts.
pub(crate) fn shifted_clear(economy: &ContinuumEconomy, shifts: &[f64], tops: &[f64], amount: f64) -> Cleared {
    let groups = shifts.len();
    let cut = |m: usize, t: f64| (t - shifts[m]).clamp(0.0, tops[m]);
    let demand = |t: f64| -> f64 {
        (0..groups)
            .map(|m| economy.mass_between(GroupId(m), cut(m, t), tops[m]))
            .sum()
    };
    let available = demand(f64::NEG_INFINITY);
    if amount <= 0.0 {
        return Cleared {
            cutoffs: tops.to_vec(),
            floors: tops.to_vec(),
            fractions: vec![0.0; groups],
            admitted: vec![0.0; groups],
        };
    }
    if available <= amount {
        return finish(economy, tops, vec![0.0; groups], vec![0.0; groups], 0.0);
    }
    let mut lo = shifts.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = (0..groups)
        .map(|m| tops[m] + shifts[m])
        .fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..400 {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if demand(mid) > amount {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut out = Cleared {
        cutoffs: vec![0.0; groups],
        floors: vec![0.0; groups],
        fractions: vec![0.0; groups],
        admitted: vec![0.0; groups],
    };
    for m in 0..groups {
        let c = cut(m, hi);
        out.cutoffs[m] = c;
        out.floors[m] = c;
        out.admitted[m] = economy.mass_between(GroupId(m), c, tops[m]);
    }
    out
}
