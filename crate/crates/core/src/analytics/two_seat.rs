//! Two seats, two majority students scoring 1 and two minority students
//! with independent uniform scores. The authority gains `β` when at least
//! one minority student is admitted, plus the admitted scores.
//!
//! Closed forms are checked against the discrete mechanisms integrated
//! over the minority scores with tensor Gauss–Legendre quadrature.

use rayon::prelude::*;
use serde::Serialize;

use crate::economy::{Agent, DiscreteEconomy};
use crate::error::{Error, Result};
use crate::mechanisms::{run_priority_discrete, run_quota_discrete, PriorityPolicy, QuotaPolicy};
use crate::numerics::{composite_gauss_legendre, golden_max};
use crate::preferences::{DiversityUtility, Preferences, ScoreTransform};

/// Gap between the two majority scores; distinct scores are required.
const MAJORITY_GAP: f64 = 1e-12;
/// Separates tied minority scores on the diagonal of the tensor grid.
const TIE_NUDGE: f64 = 1e-13;

/// Values of the best priority and quota policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoSeatValues {
    pub beta: f64,
    pub v_priority: f64,
    pub v_quota: f64,
    pub alpha_star: f64,
    pub quota_star: usize,
}

pub fn two_seat_closed_form(beta: f64) -> Result<TwoSeatValues> {
    check_beta(beta)?;
    let (v_quota, quota_star) = if beta > 1.0 / 3.0 { (5.0 / 3.0 + beta, 1) } else { (2.0, 0) };
    Ok(TwoSeatValues {
        beta,
        v_priority: 1.0 + beta + 1.0 / (1.0 + beta),
        v_quota,
        alpha_star: beta / (1.0 + beta),
        quota_star,
    })
}

/// Expected utility of boost `α` in closed form.
pub fn two_seat_priority_value(beta: f64, alpha: f64) -> f64 {
    -(1.0 + beta) * alpha * alpha + 2.0 * beta * alpha + 2.0
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::invalid("the diversity gain must be a nonnegative number"));
    }
    Ok(())
}

fn preferences(beta: f64) -> Result<Preferences> {
    Preferences::new(
        ScoreTransform::Identity,
        vec![
            DiversityUtility::zero(),
            DiversityUtility::ExtremeTarget { target: 1.0, slope: beta },
        ],
    )
}

fn economy(s3: f64, s4: f64) -> Result<DiscreteEconomy> {
    let s4 = if s4 == s3 { s4 + TIE_NUDGE } else { s4 };
    DiscreteEconomy::new(
        2,
        vec![
            Agent::new(1.0, 0),
            Agent::new(1.0 - MAJORITY_GAP, 0),
            Agent::new(s3, 1),
            Agent::new(s4, 1),
        ],
        2,
    )
}

/// Tensor quadrature rule on the unit square.
#[derive(Debug, Clone)]
pub struct SquareRule {
    nodes: Vec<(f64, f64)>,
}

impl SquareRule {
    /// About `n` Gauss–Legendre nodes per dimension, spread evenly over the
    /// pieces of `[0, 1]` split at `breaks`.
    pub fn new(n: usize, breaks: &[f64]) -> Self {
        let pieces = 1 + breaks.iter().filter(|&&b| b > 0.0 && b < 1.0).count();
        SquareRule {
            nodes: composite_gauss_legendre(n.div_ceil(pieces).max(1), 0.0, 1.0, breaks),
        }
    }

    pub fn nodes_per_dimension(&self) -> usize {
        self.nodes.len()
    }

    fn integrate(&self, f: &(dyn Fn(f64, f64) -> Result<f64> + Sync)) -> Result<f64> {
        self.nodes
            .par_iter()
            .map(|&(a, wa)| {
                let mut acc = 0.0;
                for &(b, wb) in &self.nodes {
                    acc += wa * wb * f(a, b)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<f64>>>()
            .map(|v| v.iter().sum())
    }
}

/// Expected utility of boost `α`, integrating the discrete priority
/// mechanism over both minority scores. The rule is split at `1 - α`.
pub fn two_seat_priority_numeric(beta: f64, alpha: f64, nodes: usize) -> Result<f64> {
    check_beta(beta)?;
    let prefs = preferences(beta)?;
    let policy = PriorityPolicy::boosts(vec![0.0, alpha]);
    let rule = SquareRule::new(nodes, &[1.0 - alpha]);
    rule.integrate(&|s3, s4| {
        let e = economy(s3, s4)?;
        let a = run_priority_discrete(&policy, &e)?;
        prefs.utility(a.score_index(&e, &|s| s), &a.x())
    })
}

/// Expected utility of reserving `quota` seats for the minority, filled
/// before the open seats.
pub fn two_seat_quota_numeric(beta: f64, quota: usize, nodes: usize) -> Result<f64> {
    check_beta(beta)?;
    if quota > 2 {
        return Err(Error::invalid("at most two seats can be reserved"));
    }
    let prefs = preferences(beta)?;
    let policy = QuotaPolicy::reserves_first(vec![0.0, quota as f64], 2.0)?;
    let rule = SquareRule::new(nodes, &[]);
    rule.integrate(&|s3, s4| {
        let e = economy(s3, s4)?;
        let a = run_quota_discrete(&policy, &e)?;
        prefs.utility(a.score_index(&e, &|s| s), &a.x())
    })
}

/// Optimizes each policy class numerically.
pub fn two_seat_numeric(beta: f64, nodes: usize) -> Result<TwoSeatValues> {
    check_beta(beta)?;
    let (alpha_star, v_priority) = golden_max(0.0, 1.0, 1e-6, &mut |a| two_seat_priority_numeric(beta, a, nodes))?;
    let mut best = (0, f64::NEG_INFINITY);
    for quota in 0..=2 {
        let v = two_seat_quota_numeric(beta, quota, nodes)?;
        if v > best.1 {
            best = (quota, v);
        }
    }
    Ok(TwoSeatValues {
        beta,
        v_priority,
        v_quota: best.1,
        alpha_star,
        quota_star: best.0,
    })
}

/// Closed form and quadrature side by side.
#[derive(Debug, Clone, Serialize)]
pub struct TwoSeatRow {
    pub closed: TwoSeatValues,
    pub numeric: TwoSeatValues,
    pub priority_error: f64,
    pub quota_error: f64,
}

pub fn two_seat_table(betas: &[f64], nodes: usize) -> Result<Vec<TwoSeatRow>> {
    betas
        .iter()
        .map(|&beta| {
            let closed = two_seat_closed_form(beta)?;
            let numeric = two_seat_numeric(beta, nodes)?;
            Ok(TwoSeatRow {
                priority_error: (closed.v_priority - numeric.v_priority).abs(),
                quota_error: (closed.v_quota - numeric.v_quota).abs(),
                closed,
                numeric,
            })
        })
        .collect()
}

/// Where the numeric value curves cross.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    pub lo: f64,
    pub hi: f64,
    /// `V_P - V_Q` at the ends of the bracket.
    pub gap_lo: f64,
    pub gap_hi: f64,
    /// Bisection estimate of the crossing.
    pub beta: f64,
}

impl Crossing {
    /// Priorities win at `lo` and quotas at `hi`.
    pub fn is_bracketed(&self) -> bool {
        self.gap_lo > 0.0 && self.gap_hi < 0.0
    }
}

/// Evaluates `V_P - V_Q` numerically at `lo` and `hi` and bisects between
/// them `steps` times when the sign changes.
pub fn two_seat_crossing(lo: f64, hi: f64, nodes: usize, steps: usize) -> Result<Crossing> {
    let gap = |b: f64| -> Result<f64> {
        let v = two_seat_numeric(b, nodes)?;
        Ok(v.v_priority - v.v_quota)
    };
    let (gap_lo, gap_hi) = (gap(lo)?, gap(hi)?);
    let mut out = Crossing {
        lo,
        hi,
        gap_lo,
        gap_hi,
        beta: f64::NAN,
    };
    if out.is_bracketed() {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..steps {
            let m = 0.5 * (a + b);
            if gap(m)? > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        out.beta = 0.5 * (a + b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms_cross_at_one_half() {
        let v = two_seat_closed_form(0.5).unwrap();
        assert!((v.v_priority - 13.0 / 6.0).abs() < 1e-15);
        assert!((v.v_quota - 13.0 / 6.0).abs() < 1e-15);
        let v = two_seat_closed_form(0.0).unwrap();
        assert_eq!((v.v_priority, v.v_quota), (2.0, 2.0));
        let v = two_seat_closed_form(1.0).unwrap();
        assert!(v.v_quota > v.v_priority);
    }

    #[test]
    fn priority_value_peaks_at_the_closed_form_boost() {
        let beta = 0.7;
        let a = beta / (1.0 + beta);
        let v = two_seat_closed_form(beta).unwrap().v_priority;
        assert!((two_seat_priority_value(beta, a) - v).abs() < 1e-14);
    }

    #[test]
    fn quadrature_matches_fixed_policies() {
        let beta = 0.4;
        for alpha in [0.0, 0.3, 0.8] {
            let v = two_seat_priority_numeric(beta, alpha, 40).unwrap();
            assert!((v - two_seat_priority_value(beta, alpha)).abs() < 1e-9, "alpha {alpha}");
        }
        let v = two_seat_quota_numeric(beta, 1, 200).unwrap();
        assert!((v - (5.0 / 3.0 + beta)).abs() < 1e-4);
        assert!(two_seat_quota_numeric(-1.0, 1, 10).is_err());
    }
}
