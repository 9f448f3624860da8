use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CalibError, Result};
use crate::stats::{digamma, ln_gamma, trigamma};

/// Inputs are clipped to `[CLIP, 1 - CLIP]` before fitting.
pub const CLIP: f64 = 1e-4;
/// Weighted variance below which the MLE is skipped.
pub const VARIANCE_FLOOR: f64 = 1e-6;
const MAX_NEWTON: usize = 200;
const MAX_SHAPE: f64 = 1e8;

/// `Beta(alpha, beta)` posterior over a normalized parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPosterior {
    pub alpha: f64,
    pub beta: f64,
    /// Set when the method-of-moments fallback was used.
    pub fallback: bool,
}

impl BetaPosterior {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn sd(&self) -> f64 {
        let s = self.alpha + self.beta;
        (self.alpha * self.beta / (s * s * (s + 1.0))).sqrt()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        (self.alpha - 1.0) * x.ln() + (self.beta - 1.0) * (1.0 - x).ln() - ln_beta(self.alpha, self.beta)
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Average log density given the weighted sufficient statistics.
fn objective(a: f64, b: f64, s1: f64, s2: f64) -> f64 {
    (a - 1.0) * s1 + (b - 1.0) * s2 - ln_beta(a, b)
}

fn moments(mean: f64, var: f64) -> (f64, f64) {
    // keep var inside the feasible region var < m(1-m)
    let v = var.clamp(VARIANCE_FLOOR, 0.99 * mean * (1.0 - mean));
    let common = mean * (1.0 - mean) / v - 1.0;
    (mean * common, (1.0 - mean) * common)
}

/// Weighted maximum-likelihood Beta fit. Weights must be nonnegative and are
/// renormalized to sum to one.
pub fn fit_beta(values: &[f64], weights: &[f64]) -> Result<BetaPosterior> {
    check_dim("beta fit weights", values.len(), weights.len())?;
    if values.is_empty() {
        return Err(CalibError::InvalidInput("beta fit on zero values".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || values.iter().any(|v| !v.is_finite()) {
        return Err(CalibError::InvalidInput("beta fit inputs must be finite, weights nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(CalibError::InvalidInput("beta fit weights sum to zero".into()));
    }
    let xs: Vec<f64> = values.iter().map(|v| v.clamp(CLIP, 1.0 - CLIP)).collect();
    let ws: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mean: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x).sum();
    let var: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - mean).powi(2)).sum();
    let (a0, b0) = moments(mean, var);
    if var < VARIANCE_FLOOR {
        return Ok(BetaPosterior {
            alpha: a0,
            beta: b0,
            fallback: true,
        });
    }
    let s1: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.ln()).sum();
    let s2: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (1.0 - x).ln()).sum();
    let (mut a, mut b) = (a0, b0);
    let mut f = objective(a, b, s1, s2);
    for _ in 0..MAX_NEWTON {
        let pab = digamma(a + b);
        let g = [s1 - digamma(a) + pab, s2 - digamma(b) + pab];
        if g[0].abs().max(g[1].abs()) < 1e-12 {
            break;
        }
        let tab = trigamma(a + b);
        // Hessian is negative definite: [[tab - ψ1(a), tab], [tab, tab - ψ1(b)]]
        let h00 = tab - trigamma(a);
        let h11 = tab - trigamma(b);
        let det = h00 * h11 - tab * tab;
        let da = -(h11 * g[0] - tab * g[1]) / det;
        let db = -(h00 * g[1] - tab * g[0]) / det;
        let mut step = 1.0;
        let mut moved = false;
        while step > 1e-12 {
            let (na, nb) = (a + step * da, b + step * db);
            if na > 0.0 && nb > 0.0 && na < MAX_SHAPE && nb < MAX_SHAPE {
                let nf = objective(na, nb, s1, s2);
                if nf >= f {
                    a = na;
                    b = nb;
                    f = nf;
                    moved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
        return Err(CalibError::Diverged(format!("beta MLE produced alpha={a}, beta={b}")));
    }
    Ok(BetaPosterior {
        alpha: a,
        beta: b,
        fallback: false,
    })
}
