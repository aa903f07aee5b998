//! The one-school example with a uniform minority and an atom majority.
//!
//! Minority students (mass `κ`) have scores uniform on `[0, 1]`; majority
//! students (mass `1 - κ`) all score `ω`, which is uncertain. The authority
//! values the total admitted score plus `γ (x - β x² / 2)` in the admitted
//! minority mass `x`.

use rayon::prelude::*;
use serde::Serialize;

use crate::economy::ContinuumEconomy;
use crate::error::{Error, Result};
use crate::mechanisms::{run_priority, run_quota, PriorityPolicy, QuotaPolicy};
use crate::numerics::{golden_max, grid_then_golden};
use crate::preferences::{DiversityUtility, Preferences, ScoreTransform};

/// A finite distribution of the majority score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaDistribution {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl OmegaDistribution {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::invalid("need one weight per majority score"));
        }
        if points.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
            return Err(Error::invalid("majority scores must lie in [0, 1]"));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::invalid("weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(OmegaDistribution { points, weights })
    }

    /// Equal weights on `points`.
    pub fn uniform(points: Vec<f64>) -> Result<Self> {
        let n = points.len().max(1);
        Self::new(points, vec![1.0 / n as f64; n])
    }

    /// Equal weights on `n` evenly spaced points of `[lo, hi]`.
    pub fn grid(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 1 {
            return Self::uniform(vec![0.5 * (lo + hi)]);
        }
        Self::uniform((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(w, p)| w * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.iter().map(|(w, p)| p * (w - m) * (w - m)).sum()
    }

    pub fn low(&self) -> f64 {
        self.points.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn high(&self) -> f64 {
        self.points.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Parameters of the example, checked for interior optima at construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeitzmanSetting {
    kappa: f64,
    gamma: f64,
    beta: f64,
    q: f64,
    omega: OmegaDistribution,
}

impl WeitzmanSetting {
    /// Rejects settings where optimal policies would fill every seat with
    /// minority students in some state, or admit none beyond merit in
    /// some state.
    pub fn new(kappa: f64, gamma: f64, beta: f64, q: f64, omega: OmegaDistribution) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::invalid("minority mass must lie in (0, 1)"));
        }
        if !(gamma >= 0.0 && beta >= 0.0) {
            return Err(Error::invalid("diversity weight and curvature must be nonnegative"));
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid("capacity must lie in (0, 1)"));
        }
        if q > 1.0 - kappa {
            return Err(Error::invalid("capacity must not exceed the majority mass"));
        }
        let s = WeitzmanSetting {
            kappa,
            gamma,
            beta,
            q,
            omega,
        };
        let a = s.curvature();
        let (lo, hi) = (s.omega.low(), s.omega.high());
        if !(kappa.min(q) > (1.0 + gamma - lo) / a + kappa * (hi - lo)) {
            return Err(Error::invalid(
                "diversity preference too large: optimal policies would exhaust the minority or the seats",
            ));
        }
        if !(kappa * (1.0 - lo) < (1.0 + gamma - hi) / a) {
            return Err(Error::invalid(
                "diversity preference too small: some state would see no affirmative action",
            ));
        }
        Ok(s)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn omega(&self) -> &OmegaDistribution {
        &self.omega
    }

    /// `1/κ + γβ`.
    pub fn curvature(&self) -> f64 {
        1.0 / self.kappa + self.gamma * self.beta
    }

    /// `κγβ`, the index that decides between priorities and quotas.
    pub fn sensitivity(&self) -> f64 {
        self.kappa * self.gamma * self.beta
    }

    /// Same parameters with another majority-score distribution.
    pub fn with_omega(&self, omega: OmegaDistribution) -> Result<Self> {
        Self::new(self.kappa, self.gamma, self.beta, self.q, omega)
    }

    /// Preferences over (minority, majority) with identity score transform.
    pub fn preferences(&self) -> Result<Preferences> {
        Preferences::new(
            ScoreTransform::Identity,
            vec![
                DiversityUtility::LinearQuadratic {
                    gamma: self.gamma,
                    beta: self.beta,
                },
                DiversityUtility::zero(),
            ],
        )
    }

    /// The state `ω` as a binned economy: group 0 is the minority with
    /// density `κ`, group 1 puts the whole majority mass in the cell that
    /// contains `ω`.
    pub fn economy(&self, omega: f64, bins: usize) -> Result<ContinuumEconomy> {
        if bins == 0 {
            return Err(Error::invalid("need at least one cell"));
        }
        let cell = ((omega * bins as f64) as usize).min(bins - 1);
        let minority = vec![self.kappa; bins];
        let mut majority = vec![0.0; bins];
        majority[cell] = (1.0 - self.kappa) * bins as f64;
        ContinuumEconomy::new(vec![minority, majority], self.q)
    }
}

/// Closed-form values of the example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeitzmanClosedForms {
    pub v_star: f64,
    pub v_priority: f64,
    pub v_quota: f64,
    /// `V_P - V_Q`.
    pub delta: f64,
    /// `min(V* - V_P, V* - V_Q)`.
    pub delta_star: f64,
    pub alpha_star: f64,
    pub quota_star: f64,
}

/// Optimal minority admissions in state `ω`.
pub fn optimal_admissions(setting: &WeitzmanSetting, omega: f64) -> f64 {
    let k = setting.kappa;
    k * (1.0 + setting.gamma - omega) / (1.0 + setting.sensitivity())
}

/// Boost the optimal adaptive priority gives a minority student when `y`
/// minority students are admitted.
pub fn optimal_boost(setting: &WeitzmanSetting, y: f64) -> f64 {
    setting.gamma * (1.0 - setting.beta * y)
}

pub fn weitzman_closed_forms(setting: &WeitzmanSetting) -> WeitzmanClosedForms {
    let (k, g, q) = (setting.kappa, setting.gamma, setting.q);
    let kgb = setting.sensitivity();
    let a = setting.curvature();
    let mean = setting.omega.mean();
    let var = setting.omega.variance();
    let v_star = q * mean
        + 0.5
            * setting
                .omega
                .iter()
                .map(|(w, p)| p * k * (1.0 + g - w).powi(2))
                .sum::<f64>()
            / (1.0 + kgb);
    let quota_star = (1.0 + g - mean) / a;
    let v_quota = q * mean + (1.0 + g - mean) * quota_star - 0.5 * a * quota_star * quota_star;
    let v_priority = v_quota + 0.5 * k * (1.0 - kgb) * var;
    let delta = 0.5 * k * (1.0 - kgb) * var;
    let delta_star = if kgb <= 1.0 {
        0.5 * kgb * kgb * k * var / (1.0 + kgb)
    } else {
        0.5 * k * var / (1.0 + kgb)
    };
    WeitzmanClosedForms {
        v_star,
        v_priority,
        v_quota,
        delta,
        delta_star,
        alpha_star: quota_star / k - 1.0 + mean,
        quota_star,
    }
}

/// Utility in state `ω` when the top `x` of the minority and `q - x` of the
/// majority are admitted.
fn state_utility(setting: &WeitzmanSetting, omega: f64, x: f64) -> f64 {
    let k = setting.kappa;
    let cut = 1.0 - x / k;
    // Uniform minority density k on [cut, 1].
    let minority_score = k * (1.0 - cut * cut) / 2.0;
    let majority = (setting.q - x).max(0.0);
    minority_score + majority * omega + setting.gamma * (x - setting.beta * x * x / 2.0)
}

/// Minority mass admitted in state `ω` when minority scores get `alpha`
/// added and the seats go to the highest boosted scores.
fn priority_admissions(setting: &WeitzmanSetting, omega: f64, alpha: f64) -> f64 {
    let (k, q) = (setting.kappa, setting.q);
    let above = k * (1.0 - (omega - alpha).clamp(0.0, 1.0));
    if above >= q {
        return q;
    }
    let majority = (1.0 - k).min(q - above);
    (above + (q - above - majority)).min(k)
}

/// Minority mass admitted in state `ω` when the top `quota` of the minority
/// is admitted first and the rest of the seats go by score.
fn quota_first_admissions(setting: &WeitzmanSetting, omega: f64, quota: f64) -> f64 {
    let (k, q) = (setting.kappa, setting.q);
    let residual = q - quota;
    let above = (k * (1.0 - omega) - quota).max(0.0).min(residual);
    let majority = (1.0 - k).min(residual - above);
    (quota + above + (residual - above - majority)).min(k)
}

/// Values found by direct search over admissions and policy parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeitzmanNumeric {
    pub v_star: f64,
    pub v_priority: f64,
    pub v_quota: f64,
    pub delta: f64,
    pub delta_star: f64,
    pub alpha: f64,
    pub quota: f64,
}

/// Grid resolutions of the direct search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchGrid {
    /// Admission levels per state for the first-best.
    pub levels: usize,
    /// Points in each policy-parameter grid.
    pub parameters: usize,
}

impl Default for SearchGrid {
    fn default() -> Self {
        SearchGrid {
            levels: 1_000,
            parameters: 2_000,
        }
    }
}

const REFINE_TOL: f64 = 1e-12;

/// Optimizes admissions state by state and each policy class over its
/// parameter, computing utilities from the score distributions directly.
pub fn weitzman_numeric(setting: &WeitzmanSetting, grid: SearchGrid) -> Result<WeitzmanNumeric> {
    let (k, q) = (setting.kappa, setting.q);
    let top = k.min(q);
    let mut v_star = 0.0;
    for (omega, p) in setting.omega.iter() {
        let (_, v) = grid_then_golden(0.0, top, grid.levels, REFINE_TOL, &mut |x| {
            Ok(state_utility(setting, omega, x))
        })?;
        v_star += p * v;
    }
    let expected = |admit: &dyn Fn(f64) -> f64| -> f64 {
        setting
            .omega
            .iter()
            .map(|(omega, p)| p * state_utility(setting, omega, admit(omega)))
            .sum()
    };
    let (alpha, v_priority) = grid_then_golden(-1.0, 1.0 + setting.gamma, grid.parameters, REFINE_TOL, &mut |a| {
        Ok(expected(&|omega| priority_admissions(setting, omega, a)))
    })?;
    let (quota, v_quota) = grid_then_golden(0.0, top, grid.parameters, REFINE_TOL, &mut |quota| {
        Ok(expected(&|omega| quota_first_admissions(setting, omega, quota)))
    })?;
    Ok(WeitzmanNumeric {
        v_star,
        v_priority,
        v_quota,
        delta: v_priority - v_quota,
        delta_star: (v_star - v_priority).min(v_star - v_quota),
        alpha,
        quota,
    })
}

/// One row of the closed-form versus numeric comparison.
#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub kappa: f64,
    pub gamma: f64,
    pub beta: f64,
    pub closed: WeitzmanClosedForms,
    pub numeric: WeitzmanNumeric,
    /// Largest relative gap over `V*`, `V_P`, `V_Q` and `Δ`.
    pub max_relative_gap: f64,
    /// Whether `Δ` has the sign of `1 - κγβ`.
    pub sign_ok: bool,
}

fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Compares closed forms and direct search on every valid combination of
/// the given parameters; invalid combinations are skipped.
pub fn weitzman_oracle(
    kappas: &[f64],
    gammas: &[f64],
    betas: &[f64],
    q: f64,
    omega: &OmegaDistribution,
    grid: SearchGrid,
) -> Result<Vec<OracleRow>> {
    let combos: Vec<(f64, f64, f64)> = kappas
        .iter()
        .flat_map(|&k| gammas.iter().flat_map(move |&g| betas.iter().map(move |&b| (k, g, b))))
        .collect();
    let rows: Vec<Option<OracleRow>> = combos
        .par_iter()
        .map(|&(kappa, gamma, beta)| {
            let setting = match WeitzmanSetting::new(kappa, gamma, beta, q, omega.clone()) {
                Ok(s) => s,
                Err(Error::Invalid(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let closed = weitzman_closed_forms(&setting);
            let numeric = weitzman_numeric(&setting, grid)?;
            let max_relative_gap = [
                relative(closed.v_star, numeric.v_star),
                relative(closed.v_priority, numeric.v_priority),
                relative(closed.v_quota, numeric.v_quota),
                relative(closed.delta, numeric.delta),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            let expected = 1.0 - setting.sensitivity();
            let sign_ok = if expected == 0.0 {
                closed.delta == 0.0
            } else {
                closed.delta.signum() == expected.signum() && numeric.delta.signum() == expected.signum()
            };
            Ok(Some(OracleRow {
                kappa,
                gamma,
                beta,
                closed,
                numeric,
                max_relative_gap,
                sign_ok,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Per-state allocations of quota-second `Q` and priority `α = Q/κ` on
/// binned economies, and their expected utilities.
#[derive(Debug, Clone, Serialize)]
pub struct PrecedenceCheck {
    pub quota: f64,
    pub alpha: f64,
    /// Largest gap between the two allocations' admitted measures.
    pub max_allocation_gap: f64,
    pub v_quota_second: f64,
    pub v_priority: f64,
}

/// Runs the library mechanisms on binned versions of every state.
pub fn precedence_check(setting: &WeitzmanSetting, quota: f64, bins: usize) -> Result<PrecedenceCheck> {
    let prefs = setting.preferences()?;
    let alpha = quota / setting.kappa;
    let priority = PriorityPolicy::boosts(vec![alpha, 0.0]);
    let quota_second = QuotaPolicy::residual_first(vec![quota, 0.0], setting.q)?;
    let h = |s: f64| s;
    let mut out = PrecedenceCheck {
        quota,
        alpha,
        max_allocation_gap: 0.0,
        v_quota_second: 0.0,
        v_priority: 0.0,
    };
    for (omega, p) in setting.omega.iter() {
        let economy = setting.economy(omega, bins)?;
        let a = run_priority(&priority, &economy)?;
        let b = run_quota(&quota_second, &economy)?;
        for (xa, xb) in a.x().iter().zip(b.x()) {
            out.max_allocation_gap = out.max_allocation_gap.max((xa - xb).abs());
        }
        out.v_priority += p * prefs.utility(a.score_index(&economy, &h), a.x())?;
        out.v_quota_second += p * prefs.utility(b.score_index(&economy, &h), b.x())?;
    }
    Ok(out)
}

/// One point of the boost-versus-admissions curves.
#[derive(Debug, Clone, Serialize)]
pub struct BoostRow {
    pub admitted: f64,
    pub apm_boost: f64,
    pub priority_boost: f64,
    /// 1 while quota seats remain open, 0 after.
    pub quota_open: u8,
}

/// Boost each optimal policy gives the marginal minority student as a
/// function of minority admissions.
pub fn boost_curves(setting: &WeitzmanSetting, points: usize) -> Vec<BoostRow> {
    let closed = weitzman_closed_forms(setting);
    let top = setting.kappa.min(setting.q);
    (0..points)
        .map(|i| {
            let y = top * i as f64 / (points.max(2) - 1) as f64;
            BoostRow {
                admitted: y,
                apm_boost: optimal_boost(setting, y),
                priority_boost: closed.alpha_star,
                quota_open: u8::from(y < closed.quota_star),
            }
        })
        .collect()
}

/// Positive selection and guarantee effects at one curvature level.
#[derive(Debug, Clone, Serialize)]
pub struct EffectsRow {
    pub beta: f64,
    pub sensitivity: f64,
    pub positive_selection: f64,
    pub guarantee: f64,
}

/// The two effects behind `Δ`, swept over `β` with `κ`, `γ` and the
/// variance of `ω` fixed.
pub fn effects_sweep(kappa: f64, gamma: f64, variance: f64, betas: &[f64]) -> Vec<EffectsRow> {
    betas
        .iter()
        .map(|&beta| {
            let kgb = kappa * gamma * beta;
            EffectsRow {
                beta,
                sensitivity: kgb,
                positive_selection: kappa * variance,
                guarantee: 0.5 * kappa * (1.0 + kgb) * variance,
            }
        })
        .collect()
}

/// Losses of the best priority and quota policies relative to the
/// first-best.
#[derive(Debug, Clone, Serialize)]
pub struct LossRow {
    pub beta: f64,
    pub sensitivity: f64,
    pub priority_loss: f64,
    pub quota_loss: f64,
    pub delta_star: f64,
}

pub fn loss_sweep(kappa: f64, gamma: f64, variance: f64, betas: &[f64]) -> Vec<LossRow> {
    betas
        .iter()
        .map(|&beta| {
            let kgb = kappa * gamma * beta;
            let priority_loss = 0.5 * kgb * kgb * kappa * variance / (1.0 + kgb);
            let quota_loss = 0.5 * kappa * variance / (1.0 + kgb);
            LossRow {
                beta,
                sensitivity: kgb,
                priority_loss,
                quota_loss,
                delta_star: priority_loss.min(quota_loss),
            }
        })
        .collect()
}

/// First-best minority admissions in state `ω`, found by golden search.
pub fn numeric_optimal_admissions(setting: &WeitzmanSetting, omega: f64) -> Result<f64> {
    let top = setting.kappa.min(setting.q);
    Ok(golden_max(0.0, top, REFINE_TOL, &mut |x| Ok(state_utility(setting, omega, x)))?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setting(kappa: f64, gamma: f64, beta: f64) -> WeitzmanSetting {
        let omega = OmegaDistribution::grid(0.47, 0.53, 5).unwrap();
        WeitzmanSetting::new(kappa, gamma, beta, 0.5, omega).unwrap()
    }

    #[test]
    fn rejects_settings_without_interior_optima() {
        let omega = OmegaDistribution::grid(0.47, 0.53, 5).unwrap();
        assert!(WeitzmanSetting::new(0.1, 1.0, 0.0, 0.5, omega.clone()).is_err());
        assert!(WeitzmanSetting::new(0.1, 0.0, 8.0, 0.5, omega).is_err());
    }

    #[test]
    fn delta_vanishes_without_uncertainty() {
        let s = setting(0.125, 1.0, 8.5).with_omega(OmegaDistribution::uniform(vec![0.5]).unwrap()).unwrap();
        let c = weitzman_closed_forms(&s);
        assert_eq!(c.delta, 0.0);
        assert_eq!(c.delta_star, 0.0);
    }

    #[test]
    fn delta_vanishes_on_the_indifference_line() {
        let s = setting(0.125, 1.0, 8.0);
        assert_eq!(s.sensitivity(), 1.0);
        assert_eq!(weitzman_closed_forms(&s).delta, 0.0);
    }

    #[test]
    fn admissions_helpers_clear_the_market() {
        let s = setting(0.125, 1.0, 8.5);
        let c = weitzman_closed_forms(&s);
        for (omega, _) in s.omega().iter() {
            let x = priority_admissions(&s, omega, c.alpha_star);
            assert!((x - 0.125 * (1.0 - omega + c.alpha_star)).abs() < 1e-15);
            assert_eq!(quota_first_admissions(&s, omega, c.quota_star), c.quota_star);
            let star = numeric_optimal_admissions(&s, omega).unwrap();
            assert!((star - optimal_admissions(&s, omega)).abs() < 1e-7);
        }
    }

    #[test]
    fn numeric_search_matches_closed_forms() {
        let s = setting(0.15, 1.25, 9.5);
        let c = weitzman_closed_forms(&s);
        let n = weitzman_numeric(&s, SearchGrid::default()).unwrap();
        assert!(relative(c.v_star, n.v_star) < 1e-12);
        assert!(relative(c.v_priority, n.v_priority) < 1e-12);
        assert!(relative(c.v_quota, n.v_quota) < 1e-12);
        assert!((n.alpha - c.alpha_star).abs() < 1e-5);
        assert!((n.quota - c.quota_star).abs() < 1e-5);
    }
}
