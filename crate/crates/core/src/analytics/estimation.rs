//! Preference estimation from observed reserve sizes, welfare accounting,
//! synthetic beliefs with known truth, and admissions-record ingestion.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cps::{CpsFamily, CpsModel, MomentPlan, StateAllocation, CPS_SCORE_SCALE, DEFAULT_STEP};
use crate::economy::ContinuumEconomy;
use crate::error::{Error, Result};
use crate::numerics::nelder_mead;

/// Box and effort of the parameter search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Bounds per parameter, in the family's parameter order.
    pub bounds: Vec<(f64, f64)>,
    /// Starts per searched axis.
    pub starts_per_axis: usize,
    pub max_evaluations: usize,
    /// `γ` values for the homogeneous family, whose `β` bracket starts at
    /// the first bound and widens as needed.
    pub gamma_grid: Vec<f64>,
}

impl SearchConfig {
    pub fn default_for(family: CpsFamily) -> Self {
        let bounds = match family {
            CpsFamily::CpsAsymmetric => vec![(-500.0, -20.0), (-500.0, -20.0), (1.1, 4.0)],
            _ => vec![(-500.0, -20.0), (1.1, 4.0)],
        };
        SearchConfig {
            bounds,
            starts_per_axis: 5,
            max_evaluations: 4_000,
            gamma_grid: (0..=18).map(|i| 1.0 + 0.5 * i as f64).collect(),
        }
    }
}

/// Observed reserves, the yearly belief and the family to fit.
#[derive(Debug, Clone)]
pub struct EstimationProblem {
    plan: MomentPlan,
    search: SearchConfig,
}

impl EstimationProblem {
    pub fn new(
        model: CpsModel,
        observed: Vec<f64>,
        family: CpsFamily,
        step: f64,
        search: SearchConfig,
    ) -> Result<Self> {
        if family != CpsFamily::CpsHomogeneous && search.bounds.len() != family.parameter_count() {
            return Err(Error::invalid(format!(
                "{} needs bounds for {} parameters",
                family.name(),
                family.parameter_count()
            )));
        }
        if search.bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::invalid("every search bound needs lo < hi"));
        }
        if search.starts_per_axis == 0 {
            return Err(Error::invalid("need at least one start per axis"));
        }
        if family == CpsFamily::CpsHomogeneous {
            let first = observed.first().copied().unwrap_or(0.0);
            if observed.iter().any(|r| *r != first) {
                return Err(Error::invalid("the homogeneous family needs equal observed reserves"));
            }
        }
        let plan = MomentPlan::new(model, family, observed, step)?;
        Ok(EstimationProblem { plan, search })
    }

    pub fn plan(&self) -> &MomentPlan {
        &self.plan
    }

    pub fn model(&self) -> &CpsModel {
        self.plan.model()
    }

    pub fn family(&self) -> CpsFamily {
        self.plan.family()
    }

    pub fn observed(&self) -> &[f64] {
        self.plan.reserves()
    }

    pub fn search(&self) -> &SearchConfig {
        &self.search
    }

    pub fn moments(&self, params: &[f64]) -> Result<Vec<f64>> {
        self.plan.moments(params)
    }

    pub fn objective(&self, params: &[f64]) -> Result<f64> {
        self.plan.objective(params)
    }
}

/// One point of the homogeneous `β*(γ)` curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub gamma: f64,
    /// NaN when no root was found.
    pub beta: f64,
    pub moment: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimationResult {
    pub family: CpsFamily,
    pub parameter_names: Vec<String>,
    /// Empty for the homogeneous family, which reports `curve` instead.
    pub parameters: Vec<f64>,
    pub moments: Vec<f64>,
    /// `Σ G²` at `parameters`; for the homogeneous family, the largest
    /// absolute moment on the curve.
    pub objective: f64,
    pub converged: bool,
    pub starts: usize,
    pub curve: Vec<CurvePoint>,
    pub warnings: Vec<String>,
}

fn to_box(z: &[f64], bounds: &[(f64, f64)]) -> (Vec<f64>, f64) {
    let mut outside = 0.0;
    let p = z
        .iter()
        .zip(bounds)
        .map(|(&v, &(lo, hi))| {
            let c = v.clamp(0.0, 1.0);
            outside += (v - c) * (v - c);
            lo + c * (hi - lo)
        })
        .collect();
    (p, outside)
}

fn start_points(n: usize, k: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..k).map(|i| (i as f64 + 0.5) / k as f64).collect();
    let mut out = Vec::new();
    for &a in &axis {
        for &b in &axis {
            out.push(match n {
                2 => vec![a, b],
                // Asymmetric: start with equal coefficients below and above.
                _ => vec![a, a, b],
            });
        }
    }
    out
}

/// Minimizes `Σ G²` by multi-start Nelder–Mead in the search box, or
/// traces `β*(γ)` by bisection for the homogeneous family.
pub fn estimate(problem: &EstimationProblem) -> Result<EstimationResult> {
    let family = problem.family();
    let mut warnings: Vec<String> = problem.plan.warnings().to_vec();
    let names = family.parameter_names().iter().map(|s| s.to_string()).collect();
    if family == CpsFamily::CpsHomogeneous {
        let curve = homogeneous_curve(problem)?;
        let missing = curve.iter().filter(|p| p.beta.is_nan()).count();
        if missing > 0 {
            warnings.push(format!("{missing} grid values of gamma have no root"));
        }
        let objective = curve
            .iter()
            .filter(|p| !p.beta.is_nan())
            .map(|p| p.moment.abs())
            .fold(0.0, f64::max);
        return Ok(EstimationResult {
            family,
            parameter_names: names,
            parameters: Vec::new(),
            moments: Vec::new(),
            objective,
            converged: missing == 0,
            starts: 0,
            curve,
            warnings,
        });
    }
    let bounds = problem.search.bounds.clone();
    let n = bounds.len();
    let starts = start_points(n, problem.search.starts_per_axis);
    let runs: Vec<_> = starts
        .par_iter()
        .map(|z0| {
            let mut f = |z: &[f64]| {
                let (p, outside) = to_box(z, &bounds);
                match problem.objective(&p) {
                    Ok(v) => v * (1.0 + 1e6 * outside) + 1e6 * outside,
                    Err(_) => f64::INFINITY,
                }
            };
            let scale = vec![0.1; n];
            nelder_mead(z0, &scale, 0.0, 1e-11, problem.search.max_evaluations, &mut f)
        })
        .collect();
    let best = runs
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| Error::invalid("no starting points"))?;
    let (parameters, _) = to_box(&best.x, &bounds);
    let on_edge = best.x.iter().any(|&v| v <= 1e-6 || v >= 1.0 - 1e-6);
    if on_edge {
        warnings.push("best point lies on the search boundary".into());
    }
    if !best.converged {
        warnings.push(format!("simplex stopped after {} evaluations", best.evaluations));
    }
    let moments = problem.moments(&parameters)?;
    let objective = moments.iter().map(|g| g * g).sum();
    Ok(EstimationResult {
        family,
        parameter_names: names,
        parameters,
        moments,
        objective,
        converged: best.converged && !on_edge,
        starts: starts.len(),
        curve: Vec::new(),
        warnings,
    })
}

const MAX_WIDENING: usize = 60;

/// `β*(γ)` solving the common-reserve moment on the configured `γ` grid.
pub fn homogeneous_curve(problem: &EstimationProblem) -> Result<Vec<CurvePoint>> {
    if problem.family() != CpsFamily::CpsHomogeneous {
        return Err(Error::invalid("the beta curve needs the homogeneous family"));
    }
    let (lo, hi) = problem.search.bounds[0];
    problem
        .search
        .gamma_grid
        .par_iter()
        .map(|&gamma| {
            let g = |beta: f64| -> Result<f64> { Ok(problem.moments(&[beta, gamma])?[0]) };
            // The root scales steeply with gamma, so widen the bracket
            // geometrically toward zero and toward minus infinity.
            let (mut a, mut b) = (lo, hi);
            let (mut ga, mut gb) = (g(a)?, g(b)?);
            let mut widen = 0;
            while ga.signum() == gb.signum() {
                if widen == MAX_WIDENING {
                    return Ok(CurvePoint {
                        gamma,
                        beta: f64::NAN,
                        moment: ga.abs().min(gb.abs()),
                    });
                }
                widen += 1;
                a *= 4.0;
                b /= 4.0;
                ga = g(a)?;
                gb = g(b)?;
            }
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let gm = g(m)?;
                if gm.signum() == ga.signum() {
                    a = m;
                    ga = gm;
                } else {
                    b = m;
                }
                if b - a <= 1e-12 * (1.0 + a.abs()) {
                    break;
                }
            }
            let beta = 0.5 * (a + b);
            Ok(CurvePoint {
                gamma,
                beta,
                moment: g(beta)?,
            })
        })
        .collect()
}

/// Whether `|β*(γ)|` increases along the curve, ignoring missing points.
pub fn curve_magnitude_increasing(curve: &[CurvePoint]) -> bool {
    let found: Vec<&CurvePoint> = curve.iter().filter(|p| !p.beta.is_nan()).collect();
    found.len() >= 2 && found.windows(2).all(|w| w[1].beta.abs() > w[0].beta.abs())
}

/// Payoffs of the optimal adaptive priority and of the observed reserves.
#[derive(Debug, Clone, Serialize)]
pub struct WelfareGainReport {
    pub parameters: Vec<f64>,
    pub payoff_apm: f64,
    pub payoff_reserve: f64,
    pub gain: f64,
    /// Expected diversity loss of the reserve allocation, in payoff units.
    pub loss_from_underrepresentation: f64,
    /// `gain / loss`; NaN when the loss is zero.
    pub gain_ratio: f64,
    pub apm: Vec<StateAllocation>,
    pub reserve: Vec<StateAllocation>,
}

impl WelfareGainReport {
    /// Recomputes the payoffs from the stored allocations.
    pub fn recompute(&self, model: &CpsModel, family: CpsFamily) -> Result<(f64, f64)> {
        Ok((
            model.payoff_of(&self.apm, family, &self.parameters)?,
            model.payoff_of(&self.reserve, family, &self.parameters)?,
        ))
    }
}

pub fn welfare_gain_report(
    model: &CpsModel,
    reserves: &[f64],
    family: CpsFamily,
    params: &[f64],
) -> Result<WelfareGainReport> {
    let family = if family == CpsFamily::CpsHomogeneous { CpsFamily::Cps } else { family };
    let apm = model.apm_allocations(family, params)?;
    let reserve = model.reserve_allocations(reserves)?;
    let payoff_apm = model.payoff_of(&apm, family, params)?;
    let payoff_reserve = model.payoff_of(&reserve, family, params)?;
    let loss = model.diversity_term(&reserve, family, params)?.abs();
    let gain = payoff_apm - payoff_reserve;
    Ok(WelfareGainReport {
        parameters: params.to_vec(),
        payoff_apm,
        payoff_reserve,
        gain,
        loss_from_underrepresentation: loss,
        gain_ratio: if loss > 0.0 { gain / loss } else { f64::NAN },
        apm,
        reserve,
    })
}

/// Admitted share and mean admitted score of one tier in one year.
#[derive(Debug, Clone, Serialize)]
pub struct ScatterRow {
    pub state: usize,
    pub policy: &'static str,
    pub tier: usize,
    pub share: f64,
    pub mean_score: f64,
}

pub fn scatter_rows(model: &CpsModel, report: &WelfareGainReport) -> Vec<ScatterRow> {
    let mut rows = Vec::new();
    for (policy, allocs) in [("apm", &report.apm), ("reserve", &report.reserve)] {
        let scores = model.tier_scores(allocs);
        for (state, (a, s)) in allocs.iter().zip(&scores).enumerate() {
            for (tier, share) in a.shares(model.capacity()).into_iter().enumerate() {
                rows.push(ScatterRow {
                    state,
                    policy,
                    tier,
                    share,
                    mean_score: s[tier],
                });
            }
        }
    }
    rows
}

/// Gains over a grid of `(β, γ)` values.
#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub beta: f64,
    pub gamma: f64,
    pub payoff_apm: f64,
    pub payoff_reserve: f64,
    pub gain: f64,
    pub loss: f64,
    pub gain_ratio: f64,
}

pub fn robustness_grid(
    model: &CpsModel,
    reserves: &[f64],
    family: CpsFamily,
    betas: &[f64],
    gammas: &[f64],
) -> Result<Vec<GridPoint>> {
    if family == CpsFamily::CpsAsymmetric {
        return Err(Error::invalid("the robustness grid covers two-parameter families"));
    }
    let pairs: Vec<(f64, f64)> = betas.iter().flat_map(|&b| gammas.iter().map(move |&g| (b, g))).collect();
    pairs
        .par_iter()
        .map(|&(beta, gamma)| {
            let r = welfare_gain_report(model, reserves, family, &[beta, gamma])?;
            Ok(GridPoint {
                beta,
                gamma,
                payoff_apm: r.payoff_apm,
                payoff_reserve: r.payoff_reserve,
                gain: r.gain,
                loss: r.loss_from_underrepresentation,
                gain_ratio: r.gain_ratio,
            })
        })
        .collect()
}

/// Gains along the homogeneous `β*(γ)` curve.
pub fn curve_gains(model: &CpsModel, reserves: &[f64], curve: &[CurvePoint]) -> Result<Vec<GridPoint>> {
    curve
        .par_iter()
        .filter(|p| !p.beta.is_nan())
        .map(|p| {
            let r = welfare_gain_report(model, reserves, CpsFamily::Cps, &[p.beta, p.gamma])?;
            Ok(GridPoint {
                beta: p.beta,
                gamma: p.gamma,
                payoff_apm: r.payoff_apm,
                payoff_reserve: r.payoff_reserve,
                gain: r.gain,
                loss: r.loss_from_underrepresentation,
                gain_ratio: r.gain_ratio,
            })
        })
        .collect()
}

/// Settings of a synthetic yearly belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub years: usize,
    pub bins: usize,
    pub capacity: f64,
    /// Common reserve share that must be optimal.
    pub reserve: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Exponential tilt of each tier's score density; tier count follows.
    pub tilts: Vec<f64>,
    /// Half-width of the uniform yearly perturbation of every tilt.
    pub noise: f64,
    /// Lower edge of the upper band whose density is rescaled per tier.
    pub band: f64,
    pub seed: u64,
    pub step: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            years: 5,
            bins: 800,
            capacity: 0.1,
            reserve: 0.175,
            beta: -200.0,
            gamma: 2.0,
            tilts: vec![6.0, 4.0, 2.5, 1.0],
            noise: 1.0,
            band: 0.6,
            seed: 7,
            step: DEFAULT_STEP,
        }
    }
}

/// A belief built so that the common reserve is optimal at the
/// configured parameters.
#[derive(Debug, Clone)]
pub struct SyntheticBelief {
    pub model: CpsModel,
    pub reserves: Vec<f64>,
    /// Log scale of each tier's upper-band density; the first is fixed.
    pub bands: Vec<f64>,
    pub newton_iterations: usize,
    /// Largest moment at the configured parameters.
    pub residual: f64,
}

fn tilted(tilt: f64, s: f64) -> f64 {
    if tilt.abs() < 1e-9 {
        1.0
    } else {
        tilt * (tilt * s).exp() / tilt.exp_m1()
    }
}

fn synthetic_model(cfg: &SyntheticConfig, tilts: &[Vec<f64>], bands: &[f64]) -> Result<CpsModel> {
    let tiers = cfg.tilts.len();
    let w = 1.0 / cfg.years as f64;
    let states = tilts
        .iter()
        .map(|year| {
            let e = ContinuumEconomy::from_fn(tiers, cfg.bins, cfg.capacity, |t, s| {
                let scale = if s >= cfg.band { bands[t].exp() } else { 1.0 };
                0.25 * tilted(year[t], s) * scale
            })?;
            Ok((e, w))
        })
        .collect::<Result<Vec<_>>>()?;
    CpsModel::new(states, CPS_SCORE_SCALE)
}

fn first_order_gaps(cfg: &SyntheticConfig, tilts: &[Vec<f64>], bands: &[f64]) -> Result<Vec<f64>> {
    let model = synthetic_model(cfg, tilts, bands)?;
    let reserves = vec![cfg.reserve; cfg.tilts.len()];
    let plan = MomentPlan::new(model, CpsFamily::Cps, reserves, cfg.step)?;
    let d = plan.derivatives(&[cfg.beta, cfg.gamma])?;
    Ok(d[1..].iter().map(|v| d[0] - v).collect())
}

fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Draws yearly tilts from the seed, then rescales the upper-band density
/// of tiers 1.. by damped Newton so that every tier's marginal reserve value
/// equals tier 0's at the configured parameters.
pub fn synthetic_belief(cfg: &SyntheticConfig) -> Result<SyntheticBelief> {
    let tiers = cfg.tilts.len();
    if tiers < 2 || cfg.years == 0 {
        return Err(Error::invalid("need at least two tiers and one year"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tilts: Vec<Vec<f64>> = (0..cfg.years)
        .map(|_| cfg.tilts.iter().map(|t| t + rng.gen_range(-cfg.noise..=cfg.noise)).collect())
        .collect();
    let mut bands = vec![0.0; tiers];
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut f = first_order_gaps(cfg, &tilts, &bands)?;
    let mut iterations = 0;
    while norm(&f) > 1e-9 {
        if iterations >= 60 {
            return Err(Error::NoConvergence {
                iterations,
                residual: norm(&f),
            });
        }
        iterations += 1;
        let h = 1e-6;
        let mut jac = vec![vec![0.0; tiers - 1]; tiers - 1];
        for k in 1..tiers {
            let mut b = bands.clone();
            b[k] += h;
            let fk = first_order_gaps(cfg, &tilts, &b)?;
            for (row, (a, c)) in fk.iter().zip(&f).enumerate() {
                jac[row][k - 1] = (a - c) / h;
            }
        }
        let delta = solve_linear(jac, f.iter().map(|v| -v).collect()).ok_or_else(|| Error::NoConvergence {
            iterations,
            residual: norm(&f),
        })?;
        let mut t = 1.0;
        loop {
            let mut trial = bands.clone();
            for k in 1..tiers {
                trial[k] += t * delta[k - 1].clamp(-2.0, 2.0);
            }
            let ft = first_order_gaps(cfg, &tilts, &trial)?;
            if norm(&ft) < norm(&f) || t < 1e-4 {
                bands = trial;
                f = ft;
                break;
            }
            t /= 2.0;
        }
    }
    let model = synthetic_model(cfg, &tilts, &bands)?;
    let reserves = vec![cfg.reserve; tiers];
    let plan = MomentPlan::new(model.clone(), CpsFamily::Cps, reserves.clone(), cfg.step)?;
    let residual = norm(&plan.moments(&[cfg.beta, cfg.gamma])?);
    Ok(SyntheticBelief {
        model,
        reserves,
        bands,
        newton_iterations: iterations,
        residual,
    })
}

/// One applicant in an admissions record file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissionRecord {
    pub year: i64,
    pub score: f64,
    /// Tier index, from zero.
    pub group: usize,
}

/// Bins records into one continuum economy per year with total mass 1,
/// equal year weights and capacity `capacity_share`. Scores are divided
/// by `score_scale`.
pub fn model_from_records(
    records: &[AdmissionRecord],
    tiers: usize,
    bins: usize,
    capacity_share: f64,
    score_scale: f64,
) -> Result<(CpsModel, Vec<i64>)> {
    if tiers == 0 || bins == 0 {
        return Err(Error::invalid("need at least one tier and one cell"));
    }
    if !(capacity_share > 0.0 && capacity_share < 1.0) {
        return Err(Error::invalid("capacity share must lie in (0, 1)"));
    }
    let mut years: BTreeMap<i64, Vec<&AdmissionRecord>> = BTreeMap::new();
    for r in records {
        if r.group >= tiers {
            return Err(Error::invalid(format!("record tier {} outside 0..{tiers}", r.group)));
        }
        if !(0.0..=score_scale).contains(&r.score) {
            return Err(Error::invalid(format!("record score {} outside [0, {score_scale}]", r.score)));
        }
        years.entry(r.year).or_default().push(r);
    }
    if years.is_empty() {
        return Err(Error::invalid("no admission records"));
    }
    let w = 1.0 / years.len() as f64;
    let mut states = Vec::with_capacity(years.len());
    for (year, list) in &years {
        let n = list.len() as f64;
        let mut density = vec![vec![0.0; bins]; tiers];
        for r in list {
            let k = ((r.score / score_scale * bins as f64) as usize).min(bins - 1);
            density[r.group][k] += bins as f64 / n;
        }
        let e = ContinuumEconomy::new(density, capacity_share).map_err(|e| Error::invalid(format!("year {year}: {e}")))?;
        states.push((e, w));
    }
    Ok((CpsModel::new(states, score_scale)?, years.keys().copied().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_solver_inverts_a_small_system() {
        let x = solve_linear(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn records_become_unit_mass_years() {
        let records: Vec<AdmissionRecord> = (0..200)
            .map(|i| AdmissionRecord {
                year: 2013 + (i % 2) as i64,
                score: (i as f64 * 4.37) % 900.0,
                group: i % 4,
            })
            .collect();
        let (model, years) = model_from_records(&records, 4, 90, 0.2, 900.0).unwrap();
        assert_eq!(years, vec![2013, 2014]);
        for (e, w) in model.states() {
            assert!((e.total_mass() - 1.0).abs() < 1e-12);
            assert_eq!(*w, 0.5);
        }
        let bad = [AdmissionRecord { year: 1, score: 950.0, group: 0 }];
        assert!(model_from_records(&bad, 4, 90, 0.2, 900.0).is_err());
    }
}
