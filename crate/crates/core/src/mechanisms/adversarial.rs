//! Adversarial state constructions showing that no priority policy, and no
//! quota policy, is first-best for strictly concave preferences that are
//! not extremely risk-averse.
//!
//! Two-group constructions only. Every state is a piecewise-uniform density
//! with both groups of measure `q`.

use super::apm::{optimal_apm, run_apm_greedy};
use super::quota::{run_quota, QuotaPolicy, Round};
use crate::economy::ContinuumEconomy;
use crate::error::{Error, Result};
use crate::preferences::Preferences;

/// Density over `bins` cells of a mixture of uniform pieces
/// `(lo, hi, mass)`, integrated exactly over each cell.
pub fn piecewise_uniform(bins: usize, pieces: &[(f64, f64, f64)]) -> Vec<f64> {
    let w = 1.0 / bins as f64;
    let mut out = vec![0.0; bins];
    for &(lo, hi, mass) in pieces {
        if !(hi > lo) || mass <= 0.0 {
            continue;
        }
        let f = mass / (hi - lo);
        let first = ((lo / w).floor() as usize).min(bins - 1);
        let last = ((hi / w).ceil() as usize).min(bins);
        for (k, cell) in out.iter_mut().enumerate().take(last).skip(first) {
            let a = (k as f64 * w).max(lo);
            let b = ((k + 1) as f64 * w).min(hi);
            if b > a {
                *cell += f * (b - a) / w;
            }
        }
    }
    out
}

/// Optimal measures and cutoffs of a state under the optimal adaptive
/// priority.
#[derive(Debug, Clone)]
pub struct StateOptimum {
    pub x: Vec<f64>,
    pub cutoffs: Vec<f64>,
}

pub fn state_optimum(economy: &ContinuumEconomy, prefs: &Preferences) -> Result<StateOptimum> {
    let alloc = run_apm_greedy(&optimal_apm(prefs)?, economy)?;
    Ok(StateOptimum {
        x: alloc.x().to_vec(),
        cutoffs: alloc.cutoffs().to_vec(),
    })
}

/// Endpoints of the interval around `x` on which `u'` is constant.
fn flat_interval(prefs: &Preferences, m: usize, x: f64, upper: f64) -> (f64, f64) {
    let u = prefs.utility_of(m);
    let d = u.derivative(x);
    let same = |y: f64| (u.derivative(y) - d).abs() <= 1e-12 * (1.0 + d.abs());
    let edge = |toward: f64| {
        if same(toward) {
            return toward;
        }
        let (mut inside, mut outside) = (x, toward);
        for _ in 0..200 {
            let mid = 0.5 * (inside + outside);
            if mid == inside || mid == outside {
                break;
            }
            if same(mid) {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        inside
    };
    (edge(0.0), edge(upper))
}

/// The three states `ω, ω', ω''` against priority policies.
///
/// `ω` has both groups uniform on `[0, 1]`. `ω'` moves the optimum to the
/// nearest point where some marginal value is not locally constant while
/// keeping the optimal cutoffs. `ω''` shifts measure `ε` of the optimum from
/// one group to the other and lowers that group's cutoff, so that the two
/// states demand incompatible comparisons between the same score pairs.
pub fn priority_adversarial_states(prefs: &Preferences, q: f64, bins: usize) -> Result<Vec<ContinuumEconomy>> {
    if prefs.groups() != 2 {
        return Err(Error::invalid("adversarial construction needs exactly two groups"));
    }
    if !prefs.is_nontrivial(q)? {
        return Err(Error::invalid("preferences are trivial: one group is always preferred"));
    }
    let h = prefs.h();
    let base_density = vec![vec![q; bins], vec![q; bins]];
    let base = ContinuumEconomy::new(base_density, q)?;
    let opt = state_optimum(&base, prefs)?;
    if opt.x.iter().any(|&x| x <= 1e-9 || x >= q - 1e-9) {
        return Err(Error::invalid("optimum in the uniform state is not interior"));
    }
    let star: Vec<f64> = (0..2)
        .map(|k| {
            let (a, b) = flat_interval(prefs, k, opt.x[k], q);
            if (opt.x[k] - a).abs() <= (b - opt.x[k]).abs() {
                a
            } else {
                b
            }
        })
        .collect();
    // Group `m` is the one closer to a point of strict concavity.
    let (m, n) = if (opt.x[0] - star[0]).abs() <= (opt.x[1] - star[1]).abs() {
        (0, 1)
    } else {
        (1, 0)
    };
    let mut hat = [0.0; 2];
    hat[m] = star[m];
    hat[n] = q - star[m];
    let (s_m, s_n) = (opt.cutoffs[m], opt.cutoffs[n]);

    let state = |xm: f64, cm: f64, xn: f64, cn: f64| -> Result<ContinuumEconomy> {
        let mut d = vec![Vec::new(), Vec::new()];
        d[m] = piecewise_uniform(bins, &[(cm, 1.0, xm), (0.0, cm, q - xm)]);
        d[n] = piecewise_uniform(bins, &[(cn, 1.0, xn), (0.0, cn, q - xn)]);
        ContinuumEconomy::new(d, q)
    };
    let prime = state(hat[m], s_m, hat[n], s_n)?;

    let um = prefs.utility_of(m);
    let un = prefs.utility_of(n);
    let lower = star[m] <= opt.x[m];
    let mut eps = hat[m].min(hat[n]) / 3.0;
    for _ in 0..40 {
        let (xm, xn) = if lower {
            (hat[m] - eps, hat[n] + eps)
        } else {
            (hat[m] + eps, hat[n] - eps)
        };
        let target = h.eval(s_n) + un.derivative(xn) - um.derivative(xm);
        let inv = h.inverse(target)?;
        let moved = (inv.value - s_m).abs() > 1e-3;
        if !inv.clamped && inv.value > 0.0 && inv.value < 1.0 && moved && xm > 0.0 && xn > 0.0 {
            let second = state(xm, inv.value, xn, s_n)?;
            return Ok(vec![base, prime, second]);
        }
        eps *= 0.5;
    }
    Err(Error::invalid("could not place the lowered cutoff inside the score range"))
}

/// Orderings of states under which a strictly increasing priority can
/// produce the given optimal cutoffs.
///
/// A priority policy admits group `m` above `P_m^{-1}(t_ω)` for a common
/// threshold `t_ω`, so along states sorted by `t` every group's cutoff must
/// rise together: between consecutive states either all cutoffs are equal
/// (within `tol`) or all strictly increase. Returns every permutation of
/// the states that passes; an empty result certifies that no priority
/// policy is optimal in all of them.
pub fn consistent_priority_orderings(cutoffs: &[Vec<f64>], tol: f64) -> Vec<Vec<usize>> {
    let n = cutoffs.len();
    let mut out = Vec::new();
    let mut perm: Vec<usize> = (0..n).collect();
    permutations(&mut perm, 0, &mut |p| {
        let ok = p.windows(2).all(|w| {
            let (a, b) = (&cutoffs[w[0]], &cutoffs[w[1]]);
            let all_equal = a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol);
            let all_rise = a.iter().zip(b).all(|(x, y)| y - x > tol);
            all_equal || all_rise
        });
        if ok {
            out.push(p.to_vec());
        }
    });
    out
}

fn permutations(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, f);
        v.swap(k, i);
    }
}

/// States against quota policies.
///
/// Two states place the groups on narrow disjoint bands, each group on top
/// once; this pins the reserves. A third copies the first band state but
/// lifts half of the admitted lower group above the top band, which forces
/// reserves to precede the residual. A full-support uniform state then
/// rejects the pinned policy unless preferences are extremely risk-averse.
pub fn quota_adversarial_states(q: f64, bins: usize) -> Result<Vec<ContinuumEconomy>> {
    let band = 0.05;
    let (low, high) = (0.2, 0.6);
    let top_first = ContinuumEconomy::new(
        vec![
            piecewise_uniform(bins, &[(high, high + band, q)]),
            piecewise_uniform(bins, &[(low, low + band, q)]),
        ],
        q,
    )?;
    let top_second = ContinuumEconomy::new(
        vec![
            piecewise_uniform(bins, &[(low, low + band, q)]),
            piecewise_uniform(bins, &[(high, high + band, q)]),
        ],
        q,
    )?;
    let uniform = ContinuumEconomy::new(vec![vec![q; bins], vec![q; bins]], q)?;
    Ok(vec![top_first, top_second, uniform])
}

/// Completes the quota construction once the optimum of the first band
/// state is known: half of group 1's admitted measure is lifted above group
/// 0's band.
pub fn lifted_band_state(q: f64, bins: usize, admitted_low: f64) -> Result<ContinuumEconomy> {
    let band = 0.05;
    let (low, high) = (0.2, 0.6);
    let lifted = 0.5 * admitted_low;
    ContinuumEconomy::new(
        vec![
            piecewise_uniform(bins, &[(high, high + band, q)]),
            piecewise_uniform(bins, &[(0.9, 0.95, lifted), (low, low + band, q - lifted)]),
        ],
        q,
    )
}

/// Outcome of the quota search.
#[derive(Debug, Clone)]
pub struct QuotaSearch {
    /// Policies whose allocations match every optimum within the tolerance.
    pub consistent: Vec<QuotaPolicy>,
    /// Smallest worst-state deviation found, and the policy attaining it.
    pub best: (f64, QuotaPolicy),
}

fn deviation(policy: &QuotaPolicy, states: &[ContinuumEconomy], optima: &[Vec<f64>]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (e, x) in states.iter().zip(optima) {
        let a = run_quota(policy, e)?;
        for (p, o) in a.x().iter().zip(x) {
            worst = worst.max((p - o).abs());
        }
    }
    Ok(worst)
}

/// Searches every precedence order and a grid of two-group reserves,
/// refined by compass search, for a quota policy reproducing the optimal
/// measures in every state.
pub fn search_quota_policies(
    states: &[ContinuumEconomy],
    optima: &[Vec<f64>],
    grid: usize,
    tol: f64,
) -> Result<QuotaSearch> {
    let q = states
        .first()
        .map(|e| e.capacity())
        .ok_or_else(|| Error::invalid("need at least one state"))?;
    let mut orders = Vec::new();
    let mut perm = vec![0usize, 1, 2];
    permutations(&mut perm, 0, &mut |p| {
        orders.push(
            p.iter()
                .map(|&i| if i == 2 { Round::Residual } else { Round::Group(i) })
                .collect::<Vec<_>>(),
        )
    });
    let build = |order: &[Round], a: f64, b: f64| -> Result<QuotaPolicy> {
        let (a, b) = (a.clamp(0.0, q), b.clamp(0.0, q));
        let s = a + b;
        let (a, b) = if s > q { (a * q / s, b * q / s) } else { (a, b) };
        QuotaPolicy::new(vec![a, b], order.to_vec(), q)
    };
    let mut consistent = Vec::new();
    let mut best: Option<(f64, QuotaPolicy)> = None;
    let step = q / grid as f64;
    for order in &orders {
        let mut scored = Vec::new();
        for i in 0..=grid {
            for j in 0..=(grid - i) {
                let p = build(order, i as f64 * step, j as f64 * step)?;
                scored.push((deviation(&p, states, optima)?, i as f64 * step, j as f64 * step));
            }
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(d0, a0, b0) in scored.iter().take(8) {
            let (mut a, mut b, mut d) = (a0, b0, d0);
            let mut h = step;
            while h > 1e-12 {
                let mut moved = false;
                for (da, db) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h), (h, -h), (-h, h)] {
                    let p = build(order, a + da, b + db)?;
                    let dd = deviation(&p, states, optima)?;
                    if dd < d {
                        a += da;
                        b += db;
                        d = dd;
                        moved = true;
                        break;
                    }
                }
                if !moved {
                    h *= 0.5;
                }
            }
            let p = build(order, a, b)?;
            if d <= tol {
                consistent.push(p.clone());
            }
            if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                best = Some((d, p));
            }
        }
    }
    Ok(QuotaSearch {
        consistent,
        best: best.expect("at least one order searched"),
    })
}
