use std::path::Path;

use anyhow::{Context, Result};
use apm_core::analytics::{
    curve_gains, estimate as fit, model_from_records, robustness_grid, scatter_rows, synthetic_belief,
    welfare_gain_report, AdmissionRecord, CpsFamily, CpsModel, EstimationProblem, GridPoint, SearchConfig,
    SyntheticConfig, CPS_SCORE_SCALE, DEFAULT_STEP,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::load;
use crate::output::{col, int, num, Kind, Run, Table};
use crate::Common;

/// Settings of an estimation run. With records, `reserves` is required.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    #[serde(default = "default_family")]
    pub family: CpsFamily,
    /// Observed reserve share of each tier.
    #[serde(default)]
    pub reserves: Option<Vec<f64>>,
    #[serde(default)]
    pub tiers: Option<usize>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_capacity_share")]
    pub capacity_share: f64,
    #[serde(default = "default_score_scale")]
    pub score_scale: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub search: Option<SearchConfig>,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
}

fn default_family() -> CpsFamily {
    CpsFamily::Cps
}
fn default_bins() -> usize {
    800
}
fn default_capacity_share() -> f64 {
    0.1
}
fn default_score_scale() -> f64 {
    CPS_SCORE_SCALE
}
fn default_step() -> f64 {
    DEFAULT_STEP
}
fn default_betas() -> Vec<f64> {
    vec![-400.0, -300.0, -200.0, -100.0, -50.0]
}
fn default_gammas() -> Vec<f64> {
    vec![1.5, 2.0, 2.5, 3.0]
}

impl Default for EstimateConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

fn read_records(run: &mut Run, path: &Path) -> Result<Vec<AdmissionRecord>> {
    let text = run.read_input("records", path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.with_context(|| format!("record {} of {}", i + 1, path.display())))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.context(apm_core::Error::Invalid("malformed admissions records".into())))
}

pub fn estimate(
    run: &mut Run,
    common: &Common,
    records: Option<&Path>,
    config: Option<&Path>,
    synthetic: bool,
) -> Result<()> {
    let cfg: EstimateConfig = match config {
        Some(p) => load::json(run, "config", p)?,
        None => EstimateConfig::default(),
    };
    let (model, reserves, truth, years): (CpsModel, Vec<f64>, Option<Vec<f64>>, Vec<i64>) = match (records, synthetic) {
        (Some(path), false) => {
            let recs = read_records(run, path)?;
            let reserves = cfg
                .reserves
                .clone()
                .ok_or_else(|| apm_core::Error::Invalid("the config needs the observed reserves".into()))?;
            let tiers = cfg.tiers.unwrap_or(reserves.len());
            let (model, years) = model_from_records(&recs, tiers, cfg.bins, cfg.capacity_share, cfg.score_scale)?;
            (model, reserves, None, years)
        }
        (None, true) => {
            let sc = SyntheticConfig {
                seed: common.seed,
                bins: common.grid_bins.unwrap_or(SyntheticConfig::default().bins),
                ..SyntheticConfig::default()
            };
            run.param("synthetic", &sc);
            let sb = synthetic_belief(&sc)?;
            let years = (0..sc.years as i64).collect();
            (sb.model, sb.reserves, Some(vec![sc.beta, sc.gamma]), years)
        }
        _ => anyhow::bail!(apm_core::Error::Invalid("estimate needs --records with --config, or --synthetic".into())),
    };
    run.param("config", &cfg);
    let family = cfg.family;
    let search = cfg.search.clone().unwrap_or_else(|| SearchConfig::default_for(family));
    let problem = EstimationProblem::new(model.clone(), reserves.clone(), family, cfg.step, search)?;
    let result = fit(&problem)?;

    let gain_columns = || {
        vec![
            col("beta", Kind::Number, "loss coefficient"),
            col("gamma", Kind::Number, "loss exponent"),
            col("payoff_apm", Kind::Number, "expected payoff of the optimal adaptive priority"),
            col("payoff_reserve", Kind::Number, "expected payoff of the observed reserves"),
            col("gain", Kind::Number, "payoff_apm - payoff_reserve"),
            col("loss", Kind::Number, "loss from underrepresentation under the reserves"),
            col("gain_ratio", Kind::Number, "gain / loss"),
        ]
    };
    let gain_row = |p: &GridPoint| {
        vec![
            num(p.beta),
            num(p.gamma),
            num(p.payoff_apm),
            num(p.payoff_reserve),
            num(p.gain),
            num(p.loss),
            num(p.gain_ratio),
        ]
    };

    let mut report_json = serde_json::Value::Null;
    if family == CpsFamily::CpsHomogeneous {
        let gains = curve_gains(&model, &reserves, &result.curve)?;
        let mut cols = vec![col("moment", Kind::Number, "first-order condition residual at the point")];
        cols.extend(gain_columns());
        let mut t = Table::new(cols);
        let live: Vec<_> = result.curve.iter().filter(|p| !p.beta.is_nan()).collect();
        for (p, g) in live.iter().zip(&gains) {
            let mut row = vec![num(p.moment)];
            row.extend(gain_row(g));
            t.push(row);
        }
        run.csv("curve", &t)?;
    } else {
        let report = welfare_gain_report(&model, &reserves, family, &result.parameters)?;
        let mut scatter = Table::new(vec![
            col("state", Kind::Integer, "year index"),
            col("policy", Kind::String, "apm or reserve"),
            col("tier", Kind::Integer, "tier index"),
            col("share", Kind::Number, "tier's share of admissions"),
            col("mean_score", Kind::Number, "mean admitted score of the tier, original scale"),
        ]);
        for r in scatter_rows(&model, &report) {
            scatter.push(vec![int(r.state as i64), r.policy.into(), int(r.tier as i64), num(r.share), num(r.mean_score)]);
        }
        run.csv("scatter", &scatter)?;
        report_json = json!({
            "payoff_apm": report.payoff_apm,
            "payoff_reserve": report.payoff_reserve,
            "gain": report.gain,
            "loss_from_underrepresentation": report.loss_from_underrepresentation,
            "gain_ratio": report.gain_ratio,
        });
        if family != CpsFamily::CpsAsymmetric {
            let grid = robustness_grid(&model, &reserves, family, &cfg.betas, &cfg.gammas)?;
            let mut t = Table::new(gain_columns());
            for p in &grid {
                t.push(gain_row(p));
            }
            run.csv("robustness", &t)?;
        }
    }
    run.json(
        "estimation.json",
        &json!({
            "years": years,
            "observed_reserves": reserves,
            "truth": truth,
            "result": result,
            "welfare": report_json,
        }),
    )
}
