//! Model and partition parameters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    #[error("epsilon must be positive and finite, got {0}")]
    Epsilon(f64),
    #[error("expected degree d must be positive and finite, got {0}")]
    Degree(f64),
    #[error("k must be at least 1")]
    Colors,
    #[error("lambda must be non-negative and finite, got {0}")]
    Lambda(f64),
    #[error("delta must be non-negative and finite, got {0}")]
    Delta(f64),
}

/// The constant solving `α^α = e`, about 1.7632.
pub fn alpha() -> f64 {
    // Newton on f(a) = a ln a - 1.
    let mut a = 1.76f64;
    for _ in 0..50 {
        let f = a * a.ln() - 1.0;
        let df = a.ln() + 1.0;
        a -= f / df;
    }
    a
}

/// Smallest color count in the main regime, `⌈(α+ε)d⌉`.
pub fn regime_k(epsilon: f64, d: f64) -> usize {
    ((alpha() + epsilon) * d).ceil() as usize
}

/// Parameter bundle shared by partition, percolation and uniformity code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub epsilon: f64,
    pub d: f64,
    pub k: usize,
    pub dhat: f64,
    /// Breakpoint horizon.
    pub r: usize,
    pub lambda: f64,
    pub delta: f64,
    pub n: usize,
}

impl Params {
    /// Builds the bundle with derived defaults: `dhat = (1+ε/6)d`,
    /// `r = max(2, ⌈ln n/(ln d)^4⌉)`, `δ = ε³`, `λ = 1`.
    pub fn new(epsilon: f64, d: f64, k: usize, n: usize) -> Result<Self, ParamsError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(ParamsError::Epsilon(epsilon));
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(ParamsError::Degree(d));
        }
        if k == 0 {
            return Err(ParamsError::Colors);
        }
        Ok(Params {
            epsilon,
            d,
            k,
            dhat: (1.0 + epsilon / 6.0) * d,
            r: default_r(n, d),
            lambda: 1.0,
            delta: epsilon.powi(3),
            n,
        })
    }

    pub fn with_r(mut self, r: usize) -> Self {
        self.r = r;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self, ParamsError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(ParamsError::Lambda(lambda));
        }
        self.lambda = lambda;
        Ok(self)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self, ParamsError> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(ParamsError::Delta(delta));
        }
        self.delta = delta;
        Ok(self)
    }

    #[inline]
    pub fn is_low_degree(&self, deg: usize) -> bool {
        deg as f64 <= self.dhat
    }
}

/// `max(2, ⌈ln n / (ln d)^4⌉)`; the floor also applies when `d ≤ e`.
pub fn default_r(n: usize, d: f64) -> usize {
    let ld = d.ln();
    if n < 2 || ld <= 1.0 {
        return 2;
    }
    let r = ((n as f64).ln() / ld.powi(4)).ceil();
    (r as usize).max(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_solves_fixed_point() {
        let a = alpha();
        assert!((a.powf(a) - std::f64::consts::E).abs() < 1e-12);
        assert!((a - 1.7632).abs() < 1e-4);
        assert!((a - (1.0 / a).exp()).abs() < 1e-12);
    }

    #[test]
    fn regime_color_counts() {
        assert_eq!(regime_k(0.2, 20.0), 40);
        assert_eq!(regime_k(0.2, 30.0), 59);
    }

    #[test]
    fn derived_fields() {
        let p = Params::new(0.2, 20.0, 40, 2000).unwrap();
        assert_eq!(p.dhat, (1.0 + 0.2 / 6.0) * 20.0);
        assert!((p.dhat - 20.666_666_666_666_668).abs() < 1e-12);
        assert!((p.delta - 0.008).abs() < 1e-15);
        assert_eq!(p.r, 2);
        assert!(p.is_low_degree(20));
        assert!(!p.is_low_degree(21));
        assert!(Params::new(0.0, 20.0, 40, 10).is_err());
        assert!(Params::new(0.2, 20.0, 0, 10).is_err());
        assert!(p.clone().with_lambda(-1.0).is_err());
    }

    #[test]
    fn r_default_has_floor() {
        assert_eq!(default_r(100_000, 30.0), 2);
        assert_eq!(default_r(10, 1.5), 2);
        // ln d = 1.1: ln(1e6)/1.4641 = 9.44 -> 10
        assert_eq!(default_r(1_000_000, 1.1f64.exp()), 10);
    }
}
