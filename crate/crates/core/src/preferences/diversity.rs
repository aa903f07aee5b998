use serde::{Deserialize, Serialize};

use super::transform::Func;
use crate::error::{Error, Result};

/// Step for central finite differences when no analytic derivative exists.
pub const FD_STEP: f64 = 1e-6;

/// Target share of every tier in the CPS family.
pub const CPS_TARGET: f64 = 0.25;

/// A per-group diversity utility `u_m` with its derivative.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DiversityUtility {
    /// `slope * x`.
    Linear { slope: f64 },
    /// `gamma * (x - beta x^2 / 2)`.
    LinearQuadratic { gamma: f64, beta: f64 },
    /// `coef * x^exponent` with `0 < exponent < 1`; Inada at zero.
    Power { coef: f64, exponent: f64 },
    /// Linear interpolation of `values` at `knots`, extended linearly past
    /// the last knot.
    PiecewiseLinear { knots: Vec<f64>, values: Vec<f64> },
    /// `slope * min(x, target)`: marginal value `slope` up to the target,
    /// zero above it.
    ExtremeTarget { target: f64, slope: f64 },
    /// `beta * |x / capacity - 0.25|^gamma` on the admitted share.
    Cps { beta: f64, gamma: f64, capacity: f64 },
    /// Penalises only shares below 0.25: `beta * max(0, 0.25 - x/q)^gamma`.
    CpsUnderrep { beta: f64, gamma: f64, capacity: f64 },
    /// Separate coefficients below and above the 0.25 target.
    CpsAsymmetric {
        beta_low: f64,
        beta_high: f64,
        gamma: f64,
        capacity: f64,
    },
    /// Tabulated `(x, u, du)` with linear interpolation.
    Tabulated { xs: Vec<f64>, us: Vec<f64>, dus: Vec<f64> },
    #[serde(skip)]
    Custom { u: Func, du: Option<Func> },
}

/// Family tag of a [`DiversityUtility`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityKind {
    Linear,
    ConcaveSmooth,
    PiecewiseLinear,
    ExtremeTarget,
    Cps,
    CpsUnderrepOnly,
    CpsAsymmetric,
    Tabulated,
    Custom,
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 1 {
        return ys[0];
    }
    let i = match xs.iter().position(|&k| k > x) {
        Some(0) => 0,
        Some(i) => i - 1,
        None => n - 2,
    };
    let i = i.min(n - 2);
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

impl DiversityUtility {
    /// Extreme-target utility with the default slope `10 (h(1) - h(0))`.
    pub fn extreme_target(target: f64, score_range: f64) -> Self {
        DiversityUtility::ExtremeTarget {
            target,
            slope: 10.0 * score_range,
        }
    }

    pub fn zero() -> Self {
        DiversityUtility::Linear { slope: 0.0 }
    }

    pub fn kind(&self) -> UtilityKind {
        match self {
            DiversityUtility::Linear { .. } => UtilityKind::Linear,
            DiversityUtility::LinearQuadratic { .. } | DiversityUtility::Power { .. } => {
                UtilityKind::ConcaveSmooth
            }
            DiversityUtility::PiecewiseLinear { .. } => UtilityKind::PiecewiseLinear,
            DiversityUtility::ExtremeTarget { .. } => UtilityKind::ExtremeTarget,
            DiversityUtility::Cps { .. } => UtilityKind::Cps,
            DiversityUtility::CpsUnderrep { .. } => UtilityKind::CpsUnderrepOnly,
            DiversityUtility::CpsAsymmetric { .. } => UtilityKind::CpsAsymmetric,
            DiversityUtility::Tabulated { .. } => UtilityKind::Tabulated,
            DiversityUtility::Custom { .. } => UtilityKind::Custom,
        }
    }

    /// Constant marginal value, when the utility is linear.
    pub fn linear_slope(&self) -> Option<f64> {
        match self {
            DiversityUtility::Linear { slope } => Some(*slope),
            DiversityUtility::PiecewiseLinear { knots, values } if knots.len() == 2 => {
                Some((values[1] - values[0]) / (knots[1] - knots[0]))
            }
            _ => None,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            DiversityUtility::Linear { slope } => slope * x,
            DiversityUtility::LinearQuadratic { gamma, beta } => gamma * (x - beta * x * x / 2.0),
            DiversityUtility::Power { coef, exponent } => coef * x.max(0.0).powf(*exponent),
            DiversityUtility::PiecewiseLinear { knots, values } => interp(knots, values, x),
            DiversityUtility::ExtremeTarget { target, slope } => slope * x.min(*target),
            DiversityUtility::Cps {
                beta,
                gamma,
                capacity,
            } => beta * (x / capacity - CPS_TARGET).abs().powf(*gamma),
            DiversityUtility::CpsUnderrep {
                beta,
                gamma,
                capacity,
            } => beta * (CPS_TARGET - x / capacity).max(0.0).powf(*gamma),
            DiversityUtility::CpsAsymmetric {
                beta_low,
                beta_high,
                gamma,
                capacity,
            } => {
                let d = x / capacity - CPS_TARGET;
                if d <= 0.0 {
                    beta_low * (-d).powf(*gamma)
                } else {
                    beta_high * d.powf(*gamma)
                }
            }
            DiversityUtility::Tabulated { xs, us, .. } => interp(xs, us, x),
            DiversityUtility::Custom { u, .. } => u.call(x),
        }
    }

    /// The derivative `u'(x)`; right derivative at kinks.
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            DiversityUtility::Linear { slope } => *slope,
            DiversityUtility::LinearQuadratic { gamma, beta } => gamma * (1.0 - beta * x),
            DiversityUtility::Power { coef, exponent } => {
                if x <= 0.0 {
                    f64::INFINITY
                } else {
                    coef * exponent * x.powf(exponent - 1.0)
                }
            }
            DiversityUtility::PiecewiseLinear { knots, values } => {
                let n = knots.len();
                let i = match knots.iter().position(|&k| k > x) {
                    Some(0) => 0,
                    Some(i) => i - 1,
                    None => n - 2,
                };
                (values[i + 1] - values[i]) / (knots[i + 1] - knots[i])
            }
            DiversityUtility::ExtremeTarget { target, slope } => {
                if x <= *target {
                    *slope
                } else {
                    0.0
                }
            }
            DiversityUtility::Cps {
                beta,
                gamma,
                capacity,
            } => {
                let d = x / capacity - CPS_TARGET;
                if d == 0.0 {
                    return if *gamma > 1.0 { 0.0 } else { -beta.abs() / capacity };
                }
                beta * gamma * d.abs().powf(gamma - 1.0) * d.signum() / capacity
            }
            DiversityUtility::CpsUnderrep {
                beta,
                gamma,
                capacity,
            } => {
                let d = CPS_TARGET - x / capacity;
                if d <= 0.0 {
                    0.0
                } else {
                    -beta * gamma * d.powf(gamma - 1.0) / capacity
                }
            }
            DiversityUtility::CpsAsymmetric {
                beta_low,
                beta_high,
                gamma,
                capacity,
            } => {
                let d = x / capacity - CPS_TARGET;
                if d < 0.0 {
                    -beta_low * gamma * (-d).powf(gamma - 1.0) / capacity
                } else if d > 0.0 {
                    beta_high * gamma * d.powf(gamma - 1.0) / capacity
                } else if *gamma > 1.0 {
                    0.0
                } else {
                    beta_high * gamma / capacity
                }
            }
            DiversityUtility::Tabulated { xs, dus, .. } => interp(xs, dus, x),
            DiversityUtility::Custom { u, du } => match du {
                Some(d) => d.call(x),
                None => (u.call(x + FD_STEP) - u.call(x - FD_STEP)) / (2.0 * FD_STEP),
            },
        }
    }

    /// `u(y) - u(y - 1)` for integer counts.
    pub fn increment(&self, y: usize) -> f64 {
        debug_assert!(y >= 1);
        self.value(y as f64) - self.value((y - 1) as f64)
    }

    /// Largest `x` in `[0, upper]` with `u'(x) >= p`, or 0 when none.
    ///
    /// Used to invert marginal values when allocating across authorities.
    pub fn derivative_inverse(&self, p: f64, upper: f64) -> f64 {
        if let DiversityUtility::Power { coef, exponent } = self {
            if p <= 0.0 {
                return upper;
            }
            let x = (p / (coef * exponent)).powf(1.0 / (exponent - 1.0));
            return x.min(upper);
        }
        if self.derivative(upper) >= p {
            return upper;
        }
        if self.derivative(0.0) < p {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0_f64, upper);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.derivative(mid) >= p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Structural checks, then a sampled test that `u'` is nonincreasing on
    /// `[0, upper]`.
    pub fn validate(&self, upper: f64) -> Result<()> {
        match self {
            DiversityUtility::PiecewiseLinear { knots, values } => {
                if knots.len() < 2 || knots.len() != values.len() {
                    return Err(Error::invalid("piecewise-linear utility needs matching knots and values"));
                }
                if knots.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::invalid("piecewise-linear knots must increase"));
                }
            }
            DiversityUtility::Tabulated { xs, us, dus } => {
                if xs.len() < 2 || xs.len() != us.len() || xs.len() != dus.len() {
                    return Err(Error::invalid("tabulated utility needs equal-length columns"));
                }
                if xs.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::invalid("tabulated x grid must increase"));
                }
            }
            DiversityUtility::ExtremeTarget { target, slope } => {
                if *target < 0.0 || *slope < 0.0 {
                    return Err(Error::invalid("extreme-target needs target >= 0 and slope >= 0"));
                }
            }
            DiversityUtility::Cps { capacity, gamma, .. }
            | DiversityUtility::CpsUnderrep { capacity, gamma, .. }
            | DiversityUtility::CpsAsymmetric { capacity, gamma, .. } => {
                if !(*capacity > 0.0) || !(*gamma >= 1.0) {
                    return Err(Error::invalid("CPS utility needs capacity > 0 and gamma >= 1"));
                }
            }
            DiversityUtility::Power { coef, exponent } if *coef < 0.0 || !(*exponent > 0.0 && *exponent <= 1.0) => {
                return Err(Error::invalid("power utility needs coef >= 0 and exponent in (0, 1]"));
            }
            _ => {}
        }
        if !self.is_concave(upper) {
            return Err(Error::invalid("diversity utility is not concave"));
        }
        Ok(())
    }

    /// Sampled concavity check: `u'` nonincreasing on 257 points.
    pub fn is_concave(&self, upper: f64) -> bool {
        let n = 257;
        let mut prev = f64::INFINITY;
        for i in 0..n {
            let x = upper * i as f64 / (n - 1) as f64;
            let d = self.derivative(x);
            if d.is_nan() {
                return false;
            }
            let tol = 1e-9 * (1.0 + d.abs());
            if d > prev + tol {
                return false;
            }
            prev = d;
        }
        true
    }
}
