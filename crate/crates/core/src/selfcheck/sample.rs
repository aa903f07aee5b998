//! Random economies and utilities for property checks.

use crate::economy::{Agent, ContinuumEconomy, DiscreteEconomy};
use crate::mechanisms::adversarial::piecewise_uniform;
use crate::preferences::DiversityUtility;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Discrete economy with distinct random scores, every group nonempty.
pub fn random_discrete(rng: &mut ChaCha8Rng, groups: usize, max_agents: usize) -> DiscreteEconomy {
    let n = rng.gen_range(groups.max(2)..=max_agents);
    let mut labels: Vec<usize> = (0..n).map(|i| if i < groups { i } else { rng.gen_range(0..groups) }).collect();
    labels.shuffle(rng);
    let agents = labels.into_iter().map(|g| Agent::new(rng.gen_range(0.0..1.0), g)).collect();
    let capacity = rng.gen_range(1..n);
    DiscreteEconomy::new(groups, agents, capacity).expect("random scores are distinct")
}

/// Concave piecewise-linear utility over counts `0..=n` with random
/// decreasing slopes.
pub fn random_concave_counts(rng: &mut ChaCha8Rng, n: usize) -> DiversityUtility {
    let mut slopes: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.6..1.2)).collect();
    slopes.sort_by(|a, b| b.total_cmp(a));
    let knots: Vec<f64> = (0..=n).map(|k| k as f64).collect();
    let mut values = vec![0.0];
    for s in slopes {
        values.push(values.last().unwrap() + s);
    }
    DiversityUtility::PiecewiseLinear { knots, values }
}

/// Continuum economy of uniform pieces with random supports and masses.
pub fn random_continuum(rng: &mut ChaCha8Rng, groups: usize, bins: usize) -> ContinuumEconomy {
    let mut density = Vec::with_capacity(groups);
    let mut total = 0.0;
    for _ in 0..groups {
        let pieces: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                let a: f64 = rng.gen_range(0.0..0.9);
                let b = rng.gen_range(a + 0.05..=1.0f64.min(a + 0.6));
                (a, b, rng.gen_range(0.1..0.5))
            })
            .collect();
        total += pieces.iter().map(|p| p.2).sum::<f64>();
        density.push(piecewise_uniform(bins, &pieces));
    }
    ContinuumEconomy::new(density, rng.gen_range(0.2..0.6) * total).expect("capacity below total mass")
}

/// Random strictly concave smooth utility.
pub fn random_smooth(rng: &mut ChaCha8Rng) -> DiversityUtility {
    if rng.gen_bool(0.5) {
        DiversityUtility::LinearQuadratic {
            gamma: rng.gen_range(0.05..0.8),
            beta: rng.gen_range(0.2..1.0),
        }
    } else {
        DiversityUtility::Power {
            coef: rng.gen_range(0.05..0.5),
            exponent: rng.gen_range(0.3..0.9),
        }
    }
}
