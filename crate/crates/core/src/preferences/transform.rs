use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A shared scalar function, used for user-supplied maps.
#[derive(Clone)]
pub struct Func(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl Func {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Func(Arc::new(f))
    }

    #[inline]
    pub fn call(&self, v: f64) -> f64 {
        (self.0)(v)
    }
}

impl fmt::Debug for Func {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<fn>")
    }
}

/// The strictly increasing score transform `h`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ScoreTransform {
    #[default]
    Identity,
    /// `scale * s + offset`.
    Affine { scale: f64, offset: f64 },
    /// `s^exponent`.
    Power { exponent: f64 },
    #[serde(skip)]
    Custom(Func),
}

/// Result of inverting `h`: the preimage clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inverse {
    pub value: f64,
    /// Set when the requested level lies outside `[h(0), h(1)]`.
    pub clamped: bool,
}

impl ScoreTransform {
    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ScoreTransform::Identity => s,
            ScoreTransform::Affine { scale, offset } => scale * s + offset,
            ScoreTransform::Power { exponent } => s.max(0.0).powf(*exponent),
            ScoreTransform::Custom(f) => f.call(s),
        }
    }

    /// `h(1) - h(0)`.
    pub fn range(&self) -> f64 {
        self.eval(1.0) - self.eval(0.0)
    }

    /// Checks strict monotonicity on an evenly spaced grid of 1,024 points.
    pub fn validate(&self) -> Result<()> {
        if let ScoreTransform::Affine { scale, .. } = self {
            if !(*scale > 0.0) {
                return Err(Error::invalid("affine score transform needs a positive scale"));
            }
        }
        if let ScoreTransform::Power { exponent } = self {
            if !(*exponent > 0.0) {
                return Err(Error::invalid("power score transform needs a positive exponent"));
            }
        }
        let n = 1024;
        let mut prev = self.eval(0.0);
        for i in 1..n {
            let v = self.eval(i as f64 / (n - 1) as f64);
            if !(v > prev) || !v.is_finite() {
                return Err(Error::NotMonotone(format!(
                    "score transform fails to increase near s = {}",
                    i as f64 / (n - 1) as f64
                )));
            }
            prev = v;
        }
        Ok(())
    }

    /// Inverts `h` by bisection to `|h(s) - v| <= 1e-12`.
    ///
    /// Levels outside `[h(0), h(1)]` return the nearest endpoint with
    /// `clamped` set; adaptive priorities routinely leave the score range.
    pub fn inverse(&self, v: f64) -> Result<Inverse> {
        let (h0, h1) = (self.eval(0.0), self.eval(1.0));
        if !(h1 > h0) {
            return Err(Error::NotMonotone("h(1) <= h(0)".into()));
        }
        if v <= h0 {
            return Ok(Inverse {
                value: 0.0,
                clamped: v < h0,
            });
        }
        if v >= h1 {
            return Ok(Inverse {
                value: 1.0,
                clamped: v > h1,
            });
        }
        match self {
            ScoreTransform::Identity => {
                return Ok(Inverse {
                    value: v,
                    clamped: false,
                })
            }
            ScoreTransform::Affine { scale, offset } => {
                return Ok(Inverse {
                    value: (v - offset) / scale,
                    clamped: false,
                })
            }
            _ => {}
        }
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let (mut flo, mut fhi) = (h0, h1);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let fm = self.eval(mid);
            if fm < flo || fm > fhi {
                return Err(Error::NotMonotone(format!(
                    "score transform is not increasing near s = {mid}"
                )));
            }
            if (fm - v).abs() <= 1e-12 || mid <= lo || mid >= hi {
                return Ok(Inverse {
                    value: mid,
                    clamped: false,
                });
            }
            if fm < v {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
                fhi = fm;
            }
        }
        Ok(Inverse {
            value: 0.5 * (lo + hi),
            clamped: false,
        })
    }
}

/// The strictly increasing aggregator `g` applied to the quasi-linear index.
///
/// Mechanisms never consult `g`; it only enters expected utility.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Aggregator {
    #[default]
    Identity,
    /// Constant absolute risk aversion: `(1 - exp(-a v)) / a`.
    Cara { a: f64 },
    #[serde(skip)]
    Custom(Func),
}

impl Aggregator {
    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            Aggregator::Identity => v,
            Aggregator::Cara { a } => (1.0 - (-a * v).exp()) / a,
            Aggregator::Custom(f) => f.call(v),
        }
    }

    /// Checks strict monotonicity on a grid over `[lo, hi]`.
    pub fn validate_on(&self, lo: f64, hi: f64) -> Result<()> {
        if let Aggregator::Cara { a } = self {
            if !(*a > 0.0) {
                return Err(Error::invalid("CARA aggregator needs a > 0"));
            }
        }
        let n = 256;
        let mut prev = self.eval(lo);
        for i in 1..n {
            let v = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let gv = self.eval(v);
            if !(gv > prev) {
                return Err(Error::NotMonotone(format!("aggregator fails to increase near {v}")));
            }
            prev = gv;
        }
        Ok(())
    }
}
