//! Small numerical routines: Gauss–Legendre rules, golden-section search
//! and the Nelder–Mead simplex.

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[lo, hi]`.
pub fn gauss_legendre(n: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    assert!(n > 0, "a quadrature rule needs at least one node");
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut out = vec![(0.0, 0.0); n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        out[i] = (mid - half * z, half * w);
        out[n - 1 - i] = (mid + half * z, half * w);
    }
    out
}

/// Composite Gauss–Legendre rule on `[lo, hi]` with `n` nodes on every
/// piece between consecutive breakpoints.
pub fn composite_gauss_legendre(n: usize, lo: f64, hi: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut edges = vec![lo];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&b| b > lo && b < hi).collect();
    inner.sort_by(|a, b| a.total_cmp(b));
    inner.dedup();
    edges.extend(inner);
    edges.push(hi);
    edges
        .windows(2)
        .filter(|w| w[1] > w[0])
        .flat_map(|w| gauss_legendre(n, w[0], w[1]))
        .collect()
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
/// Endpoints are compared too, since constrained optima often sit there.
pub fn golden_max(lo: f64, hi: f64, tol: f64, f: &mut dyn FnMut(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let (mut a, mut b) = (lo, hi);
    if b - a <= tol {
        let m = 0.5 * (a + b);
        return Ok((m, f(m)?));
    }
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d)?;
        }
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for e in [lo, hi] {
        let fe = f(e)?;
        if fe > best.1 {
            best = (e, fe);
        }
    }
    Ok(best)
}

/// Grid search over `n` evenly spaced points of `[lo, hi]`, refined by
/// golden-section search between the neighbours of the best point.
pub fn grid_then_golden(
    lo: f64,
    hi: f64,
    n: usize,
    tol: f64,
    f: &mut dyn FnMut(f64) -> Result<f64>,
) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::invalid("grid search needs at least two points"));
    }
    let step = (hi - lo) / (n - 1) as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..n {
        let v = f(lo + step * i as f64)?;
        if v > best.1 {
            best = (i, v);
        }
    }
    let a = lo + step * best.0.saturating_sub(1) as f64;
    let b = (lo + step * (best.0 + 1) as f64).min(hi);
    let refined = golden_max(a, b, tol, f)?;
    Ok(if refined.1 >= best.1 {
        refined
    } else {
        (lo + step * best.0 as f64, best.1)
    })
}

/// Outcome of a simplex search.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder–Mead minimization from `start` with initial edge lengths `scale`.
///
/// Stops when the spread of simplex values falls below `ftol` and the
/// simplex diameter below `xtol`, or after `max_evals` evaluations.
pub fn nelder_mead(
    start: &[f64],
    scale: &[f64],
    ftol: f64,
    xtol: f64,
    max_evals: usize,
    f: &mut dyn FnMut(&[f64]) -> f64,
) -> SimplexResult {
    let n = start.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut pts: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += scale[i];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p, &mut evals)).collect();
    let mut converged = false;
    while evals < max_evals {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = idx.iter().map(|&i| pts[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        let spread = vals[n] - vals[0];
        let diameter = pts[1..]
            .iter()
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.abs() <= ftol && diameter <= xtol {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (pts[n][j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let x = along(-0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            } else {
                let x = along(0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    pts[i] = (0..n).map(|j| pts[0][j] + 0.5 * (pts[i][j] - pts[0][j])).collect();
                    vals[i] = eval(&pts[i].clone(), &mut evals);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    SimplexResult {
        x: pts[best].clone(),
        value: vals[best],
        evaluations: evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(5, 0.0, 2.0);
        let integral: f64 = rule.iter().map(|(x, w)| w * x.powi(9)).sum();
        assert!((integral - 2f64.powi(10) / 10.0).abs() < 1e-10);
        let weights: f64 = rule.iter().map(|(_, w)| w).sum();
        assert!((weights - 2.0).abs() < 1e-14);
    }

    #[test]
    fn composite_rule_respects_breakpoints() {
        let rule = composite_gauss_legendre(4, 0.0, 1.0, &[0.3]);
        let integral: f64 = rule.iter().map(|(x, w)| w * if *x < 0.3 { 1.0 } else { 2.0 }).sum();
        assert!((integral - (0.3 + 1.4)).abs() < 1e-14);
    }

    #[test]
    fn golden_finds_interior_and_boundary_maxima() {
        let (x, _) = golden_max(0.0, 1.0, 1e-10, &mut |x| Ok(-(x - 0.3) * (x - 0.3))).unwrap();
        assert!((x - 0.3).abs() < 1e-8);
        let (x, _) = golden_max(0.0, 1.0, 1e-10, &mut |x| Ok(x)).unwrap();
        assert_eq!(x, 1.0);
    }

    #[test]
    fn simplex_minimizes_rosenbrock() {
        let r = nelder_mead(&[-1.2, 1.0], &[0.5, 0.5], 1e-14, 1e-9, 10_000, &mut |p| {
            (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2)
        });
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5);
    }
}
