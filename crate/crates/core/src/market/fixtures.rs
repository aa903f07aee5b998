//! Small reference markets.

use super::{Authority, MultiAuthorityEconomy, Population};
use crate::error::{Error, Result};
use crate::preferences::{DiversityUtility, Preferences, ScoreTransform};

fn power(coef: f64) -> DiversityUtility {
    DiversityUtility::Power { coef, exponent: 0.5 }
}

fn authority(name: &str, capacity: f64, utilities: Vec<DiversityUtility>) -> Result<Authority> {
    Ok(Authority {
        name: name.into(),
        capacity,
        prefs: Preferences::new(ScoreTransform::Identity, utilities)?,
    })
}

fn cells(bins: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..bins).map(|k| f((k as f64 + 0.5) / bins as f64)).collect()
}

/// Two authorities with capacity 1/2 and two groups of mass 1, both with
/// density 2 on `[1/2, 1]`. Group 0 prefers authority 1 and group 1
/// prefers authority 0; each authority values the group that prefers the
/// other authority more: `u = 0.25 sqrt(x)` for it and `0.125 sqrt(x)` for
/// its own fans.
///
/// In the stable matching each authority admits a quarter of each group;
/// spreading admissions unevenly across authorities raises total welfare.
/// `bins` must be a multiple of 8 so that the stable cutoffs 3/4 and 7/8
/// fall on cell edges.
pub fn two_authority_economy(bins: usize) -> Result<MultiAuthorityEconomy> {
    if bins == 0 || bins % 8 != 0 {
        return Err(Error::invalid("the two-authority market needs a multiple of 8 cells"));
    }
    let top = cells(bins, |s| if s >= 0.5 { 2.0 } else { 0.0 });
    let none = vec![0.0; bins];
    let population = Population::Grid {
        rankings: vec![vec![1, 0], vec![0, 1]],
        density: vec![vec![top.clone(), none.clone()], vec![none, top]],
    };
    MultiAuthorityEconomy::new(
        vec![
            authority("c", 0.5, vec![power(0.25), power(0.125)])?,
            authority("c'", 0.5, vec![power(0.125), power(0.25)])?,
        ],
        2,
        population,
    )
}

/// Two identical authorities facing a population split evenly between
/// both rankings, with full support.
pub fn symmetric_economy(bins: usize) -> Result<MultiAuthorityEconomy> {
    let g0 = cells(bins, |_| 0.5);
    let g1 = cells(bins, |s| 1.0 - s);
    let population = Population::Grid {
        rankings: vec![vec![0, 1], vec![1, 0]],
        density: vec![vec![g0.clone(), g0], vec![g1.clone(), g1]],
    };
    let utilities = vec![power(0.2), power(0.3)];
    MultiAuthorityEconomy::new(
        vec![
            authority("a", 0.3, utilities.clone())?,
            authority("b", 0.3, utilities)?,
        ],
        2,
        population,
    )
}

/// Three authorities with different capacities and preferences, agents
/// holding every ranking with unequal weights, and full support.
pub fn three_authority_economy(bins: usize) -> Result<MultiAuthorityEconomy> {
    let rankings = vec![
        vec![0, 1, 2],
        vec![0, 2, 1],
        vec![1, 0, 2],
        vec![1, 2, 0],
        vec![2, 0, 1],
        vec![2, 1, 0],
    ];
    let weights = [0.25, 0.15, 0.2, 0.1, 0.2, 0.1];
    let shapes: [fn(f64) -> f64; 2] = [|s| 0.8 + 0.4 * s, |s| 1.4 - 0.8 * s];
    let masses = [1.0, 0.7];
    let density = shapes
        .iter()
        .zip(masses)
        .map(|(f, mass)| weights.iter().map(|w| cells(bins, |s| mass * w * f(s))).collect())
        .collect();
    MultiAuthorityEconomy::new(
        vec![
            authority(
                "north",
                0.2,
                vec![
                    DiversityUtility::zero(),
                    DiversityUtility::LinearQuadratic { gamma: 0.3, beta: 1.0 },
                ],
            )?,
            authority("south", 0.25, vec![power(0.1), power(0.2)])?,
            authority(
                "east",
                0.15,
                vec![DiversityUtility::Linear { slope: 0.05 }, DiversityUtility::zero()],
            )?,
        ],
        2,
        Population::Grid { rankings, density },
    )
}
