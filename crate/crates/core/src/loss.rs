//! Loss functions, their negative gradients and risk-minimizing constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offsets for a degenerate binomial target are clamped to this magnitude.
pub const MAX_LOG_ODDS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// `½(y − f)²`
    SquaredError,
    /// `log(1 + eᶠ) − y·f` for `y ∈ {0, 1}`
    Binomial,
}

/// Logistic function, overflow-safe for any finite input.
pub fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + eᶠ)` without overflow.
pub fn softplus(f: f64) -> f64 {
    f.max(0.0) + (-f.abs()).exp().ln_1p()
}

impl Loss {
    pub fn value(self, y: f64, f: f64) -> f64 {
        match self {
            Loss::SquaredError => 0.5 * (y - f) * (y - f),
            Loss::Binomial => softplus(f) - y * f,
        }
    }

    pub fn negative_gradient(self, y: f64, f: f64) -> f64 {
        match self {
            Loss::SquaredError => y - f,
            Loss::Binomial => y - sigmoid(f),
        }
    }

    /// Constant minimizing the empirical risk.
    pub fn offset(self, y: &[f64]) -> Result<f64> {
        if y.is_empty() {
            return Err(Error::Fit("cannot compute an offset for an empty target".into()));
        }
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        Ok(match self {
            Loss::SquaredError => mean,
            Loss::Binomial => {
                if mean <= 0.0 {
                    -MAX_LOG_ODDS
                } else if mean >= 1.0 {
                    MAX_LOG_ODDS
                } else {
                    (mean / (1.0 - mean)).ln().clamp(-MAX_LOG_ODDS, MAX_LOG_ODDS)
                }
            }
        })
    }

    /// Mean loss.
    pub fn risk(self, y: &[f64], f: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), f.len());
        if y.is_empty() {
            return 0.0;
        }
        y.iter().zip(f).map(|(&y, &f)| self.value(y, f)).sum::<f64>() / y.len() as f64
    }

    pub fn pseudo_residuals(self, y: &[f64], f: &[f64]) -> Vec<f64> {
        y.iter().zip(f).map(|(&y, &f)| self.negative_gradient(y, f)).collect()
    }
}

/// Offset for a fitted loss: `f⁽⁰⁾ = argmin_c R(c)`.
pub fn init_offset(loss: Loss, y: &[f64]) -> Result<f64> {
    loss.offset(y)
}

pub fn pseudo_residuals(loss: Loss, y: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    if y.len() != f.len() {
        return Err(Error::Fit(format!(
            "target has {} rows, predictions {}",
            y.len(),
            f.len()
        )));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite prediction".into()));
    }
    Ok(loss.pseudo_residuals(y, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn offsets() {
        assert_eq!(init_offset(Loss::SquaredError, &[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(init_offset(Loss::Binomial, &[1.0, 1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(init_offset(Loss::SquaredError, &[]).is_err());
        assert_eq!(init_offset(Loss::Binomial, &[1.0, 1.0]).unwrap(), MAX_LOG_ODDS);
    }

    #[test]
    fn binomial_offset_matches_numeric_minimum() {
        // Golden-section search on the empirical risk as oracle.
        let y = [1.0, 1.0, 1.0, 0.0];
        let risk = |c: f64| Loss::Binomial.risk(&y, &[c; 4]);
        let (mut a, mut b) = (-5.0f64, 5.0f64);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if risk(c) < risk(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let oracle = 0.5 * (a + b);
        let off = init_offset(Loss::Binomial, &y).unwrap();
        assert!((off - oracle).abs() < 1e-6);
        assert!((off - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn residual_examples() {
        assert_eq!(Loss::SquaredError.negative_gradient(3.0, 1.0), 2.0);
        assert_eq!(Loss::Binomial.negative_gradient(1.0, 0.0), 0.5);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = crate::data::seeded_rng(1);
        let h = 1e-5;
        for loss in [Loss::SquaredError, Loss::Binomial] {
            for _ in 0..100 {
                let f: f64 = rng.gen_range(-8.0..8.0);
                let y = match loss {
                    Loss::Binomial => f64::from(rng.gen_bool(0.5) as u8),
                    Loss::SquaredError => rng.gen_range(-5.0..5.0),
                };
                let fd = -(loss.value(y, f + h) - loss.value(y, f - h)) / (2.0 * h);
                assert!((fd - loss.negative_gradient(y, f)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn binomial_is_overflow_safe() {
        for f in [-700.0, -100.0, 0.0, 100.0, 700.0] {
            for y in [0.0, 1.0] {
                let v = Loss::Binomial.value(y, f);
                assert!(v.is_finite() && v >= 0.0);
                assert!(Loss::Binomial.negative_gradient(y, f).is_finite());
            }
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn pseudo_residuals_check_lengths() {
        assert!(pseudo_residuals(Loss::SquaredError, &[1.0], &[]).is_err());
        assert!(pseudo_residuals(Loss::SquaredError, &[1.0], &[f64::NAN]).is_err());
    }
}
