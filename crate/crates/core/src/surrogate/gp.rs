use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CalibError, Result};
use crate::rng::rng_from_seed;
use crate::stats::LN_2PI;

pub const JITTER_START: f64 = 1e-8;
pub const JITTER_MAX: f64 = 1e-4;
pub const FIT_STARTS: usize = 8;
pub const DEFAULT_LENGTHSCALE: f64 = 0.3;
pub const DEFAULT_NOISE_VARIANCE: f64 = 1e-4;
/// On unit-box inputs; the lower bound keeps lengthscales from shrinking
/// below typical design spacing, where the kernel mimics observation noise.
pub const LENGTHSCALE_BOUNDS: (f64, f64) = (5e-2, 1e2);
const NOISE_VARIANCE_MIN: f64 = 1e-10;
const SEARCH_EVALS_PER_START: usize = 120;

/// Matérn-5/2 ARD hyperparameters. The observation noise variance is
/// `1 / noise_precision`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHyperparams {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_precision: f64,
}

impl KernelHyperparams {
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>, noise_variance: f64) -> Self {
        Self {
            signal_variance,
            lengthscales,
            noise_precision: 1.0 / noise_variance,
        }
    }

    pub fn noise_variance(&self) -> f64 {
        1.0 / self.noise_precision
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Defaults used before enough data exist for a fit.
    pub fn defaults(dim: usize, targets: &[f64]) -> Self {
        Self::new(
            variance_or_one(targets),
            vec![DEFAULT_LENGTHSCALE; dim],
            DEFAULT_NOISE_VARIANCE,
        )
    }

    fn to_log(&self) -> Vec<f64> {
        let mut v = vec![self.signal_variance.ln()];
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v.push(self.noise_variance().ln());
        v
    }

    fn from_log(v: &[f64]) -> Self {
        let d = v.len() - 2;
        Self::new(v[0].exp(), v[1..=d].iter().map(|x| x.exp()).collect(), v[d + 1].exp())
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.signal_variance > 0.0
            && self.noise_precision > 0.0
            && self.lengthscales.iter().all(|l| *l > 0.0)
            && self.signal_variance.is_finite()
            && self.noise_precision.is_finite();
        if ok {
            Ok(())
        } else {
            Err(CalibError::InvalidInput(format!("invalid kernel hyperparameters {self:?}")))
        }
    }
}

/// `s^2 (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r)` with `r` the lengthscale-scaled distance.
pub fn matern52(x: &[f64], y: &[f64], h: &KernelHyperparams) -> f64 {
    let r = x
        .iter()
        .zip(y)
        .zip(&h.lengthscales)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum::<f64>()
        .sqrt();
    let s5r = 5f64.sqrt() * r;
    h.signal_variance * (1.0 + s5r + s5r * s5r / 3.0) * (-s5r).exp()
}

/// Sample variance of the targets, or 1 when it is zero or undefined.
pub fn variance_or_one(y: &[f64]) -> f64 {
    if y.len() < 2 {
        return 1.0;
    }
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let v = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
    if v > 0.0 && v.is_finite() {
        v
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorPrediction {
    pub mean: f64,
    pub sd: f64,
}

/// Exact GP regression on targets centred at their sample mean.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    hyper: KernelHyperparams,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_marginal: f64,
    jitter: f64,
}

impl GaussianProcess {
    pub fn new(x: &[Vec<f64>], y: &[f64], hyper: KernelHyperparams) -> Result<Self> {
        check_dim("GP targets", x.len(), y.len())?;
        if x.is_empty() {
            return Err(CalibError::InvalidInput("GP needs at least one observation".into()));
        }
        hyper.validate()?;
        for xi in x {
            check_dim("GP input dimension", hyper.dim(), xi.len())?;
        }
        let n = x.len();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let mut k = DMatrix::from_fn(n, n, |i, j| matern52(&x[i], &x[j], &hyper));
        for i in 0..n {
            k[(i, i)] += hyper.noise_variance();
        }
        let mut jitter = JITTER_START;
        let chol = loop {
            let mut kj = k.clone();
            for i in 0..n {
                kj[(i, i)] += jitter;
            }
            if let Some(c) = Cholesky::new(kj) {
                break c;
            }
            if jitter >= JITTER_MAX {
                return Err(CalibError::NotPositiveDefinite {
                    jitter,
                    n,
                    max_diag: k.diagonal().max(),
                });
            }
            jitter = (jitter * 10.0).min(JITTER_MAX);
        };
        let alpha = chol.solve(&yc);
        let log_det: f64 = chol.l_dirty().diagonal().iter().take(n).map(|d| d.ln()).sum::<f64>() * 2.0;
        let log_marginal = -0.5 * yc.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;
        Ok(Self {
            x: x.to_vec(),
            y_mean,
            hyper,
            chol,
            alpha,
            log_marginal,
            jitter,
        })
    }

    pub fn hyper(&self) -> &KernelHyperparams {
        &self.hyper
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn num_observations(&self) -> usize {
        self.x.len()
    }

    fn cross(&self, q: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| matern52(xi, q, &self.hyper)))
    }

    /// Posterior mean only; cheaper than [`GaussianProcess::predict`].
    pub fn predict_mean(&self, q: &[f64]) -> f64 {
        self.y_mean + self.cross(q).dot(&self.alpha)
    }

    pub fn predict(&self, q: &[f64]) -> Result<PosteriorPrediction> {
        check_dim("GP query dimension", self.hyper.dim(), q.len())?;
        let kq = self.cross(q);
        let mean = self.y_mean + kq.dot(&self.alpha);
        let v = self
            .chol
            .l()
            .solve_lower_triangular(&kq)
            .expect("Cholesky factor has a positive diagonal");
        let var = (self.hyper.signal_variance - v.dot(&v)).max(0.0);
        Ok(PosteriorPrediction { mean, sd: var.sqrt() })
    }
}

/// Result of hyperparameter fitting.
#[derive(Debug, Clone)]
pub struct GpFit {
    pub gp: GaussianProcess,
    /// Log marginal likelihood at each starting point, in start order.
    pub start_log_marginals: Vec<f64>,
}

fn log_bounds(dim: usize, v: f64) -> Vec<(f64, f64)> {
    let mut b = vec![((1e-4 * v).ln(), (1e2 * v).ln())];
    b.extend(std::iter::repeat_n((LENGTHSCALE_BOUNDS.0.ln(), LENGTHSCALE_BOUNDS.1.ln()), dim));
    b.push((NOISE_VARIANCE_MIN.ln(), (10.0 * v).ln()));
    b
}

fn objective(x: &[Vec<f64>], y: &[f64], theta: &[f64]) -> f64 {
    GaussianProcess::new(x, y, KernelHyperparams::from_log(theta))
        .map(|g| g.log_marginal)
        .unwrap_or(f64::NEG_INFINITY)
}

/// Bounded coordinate pattern search maximizing `f`, starting at `start`.
fn pattern_search(f: &dyn Fn(&[f64]) -> f64, start: Vec<f64>, bounds: &[(f64, f64)], max_evals: usize) -> (Vec<f64>, f64) {
    let mut x = start;
    let mut fx = f(&x);
    let mut step = 1.0;
    let mut evals = 1;
    while step > 1e-3 && evals < max_evals {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[i] = (cand[i] + dir * step).clamp(bounds[i].0, bounds[i].1);
                if cand[i] == x[i] {
                    continue;
                }
                let fc = f(&cand);
                evals += 1;
                if fc > fx {
                    x = cand;
                    fx = fc;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Maximizes the log marginal likelihood over log-hyperparameters from
/// `FIT_STARTS` starts: the defaults and log-uniform draws inside the bounds.
pub fn fit_gp(x: &[Vec<f64>], y: &[f64], seed: u64) -> Result<GpFit> {
    if x.len() < 2 {
        return Err(CalibError::InvalidInput("GP fit needs at least two observations".into()));
    }
    check_dim("GP targets", x.len(), y.len())?;
    let dim = x[0].len();
    let v = variance_or_one(y);
    let bounds = log_bounds(dim, v);
    let mut rng = rng_from_seed(seed);
    let mut starts = vec![KernelHyperparams::defaults(dim, y).to_log()];
    for _ in 1..FIT_STARTS {
        starts.push(bounds.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)).collect());
    }
    for s in &mut starts {
        for (xi, (lo, hi)) in s.iter_mut().zip(&bounds) {
            *xi = xi.clamp(*lo, *hi);
        }
    }
    let f = |theta: &[f64]| objective(x, y, theta);
    let start_log_marginals: Vec<f64> = starts.iter().map(|s| f(s)).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in starts {
        let (theta, val) = pattern_search(&f, s, &bounds, SEARCH_EVALS_PER_START);
        if best.as_ref().is_none_or(|b| val > b.1) {
            best = Some((theta, val));
        }
    }
    let (theta, _) = best.expect("at least one start");
    let gp = GaussianProcess::new(x, y, KernelHyperparams::from_log(&theta))?;
    Ok(GpFit { gp, start_log_marginals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn unit(dim: usize) -> KernelHyperparams {
        KernelHyperparams::new(1.0, vec![1.0; dim], 1e-12)
    }

    #[test]
    fn kernel_values() {
        let h = unit(2);
        assert_eq!(matern52(&[0.3, 0.1], &[0.3, 0.1], &h), 1.0);
        assert_relative_eq!(matern52(&[0.0, 0.0], &[0.6, 0.8], &h), 0.52399, epsilon = 1e-5);
        let s5 = 5f64.sqrt();
        assert_relative_eq!(
            matern52(&[0.0, 0.0], &[0.6, 0.8], &h),
            (1.0 + s5 + 5.0 / 3.0) * (-s5).exp(),
            epsilon = 1e-15
        );
        assert!(matern52(&[0.0], &[1e3], &unit(1)) < 1e-300);
    }

    #[test]
    fn two_point_solve_matches_hand_computation() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = [1.0, 2.0];
        let h = unit(1);
        let gp = GaussianProcess::new(&x, &y, h.clone()).unwrap();
        // centred targets (-0.5, 0.5), K = [[1, k01], [k01, 1]] (+ tiny diagonal)
        let k01 = matern52(&[0.0], &[1.0], &h);
        let q = 0.25;
        let (kq0, kq1) = (matern52(&[0.0], &[q], &h), matern52(&[1.0], &[q], &h));
        let det = 1.0 - k01 * k01;
        let a0 = (-0.5 - k01 * 0.5) / det;
        let a1 = (0.5 + k01 * 0.5) / det;
        let mean = 1.5 + kq0 * a0 + kq1 * a1;
        let var = 1.0 - (kq0 * kq0 - 2.0 * k01 * kq0 * kq1 + kq1 * kq1) / det;
        let p = gp.predict(&[q]).unwrap();
        assert_relative_eq!(p.mean, mean, epsilon = 1e-6);
        assert_relative_eq!(p.sd, var.sqrt(), epsilon = 1e-5);
        assert_relative_eq!(gp.predict(&[0.5]).unwrap().mean, 1.5, epsilon = 1e-9);
    }

    #[test]
    fn interpolates_at_high_precision() {
        let x = vec![vec![0.1, 0.2], vec![0.7, 0.4], vec![0.3, 0.9]];
        let y = [0.3, -1.2, 2.5];
        let mut h = unit(2);
        h.noise_precision = 1e12;
        let gp = GaussianProcess::new(&x, &y, h).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((gp.predict(xi).unwrap().mean - yi).abs() < 1e-6);
        }
    }

    #[test]
    fn far_field_reverts_to_sample_mean_and_prior_variance() {
        let x = vec![vec![0.0], vec![1.0]];
        let gp = GaussianProcess::new(&x, &[1.0, 2.0], unit(1)).unwrap();
        let p = gp.predict(&[1e4]).unwrap();
        assert_relative_eq!(p.mean, 1.5, epsilon = 1e-12);
        assert_relative_eq!(p.sd * p.sd, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_points_drive_noise_down() {
        let x = vec![vec![0.4], vec![0.4]];
        let fit = fit_gp(&x, &[0.7, 0.7], 3).unwrap();
        assert!(fit.gp.hyper().noise_variance() < 1e-4);
    }

    #[test]
    fn fitted_likelihood_beats_every_start() {
        let mut rng = rng_from_seed(8);
        let x: Vec<Vec<f64>> = (0..15).map(|_| vec![rng.random(), rng.random()]).collect();
        let y: Vec<f64> = x.iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[1]).collect();
        let fit = fit_gp(&x, &y, 1).unwrap();
        assert_eq!(fit.start_log_marginals.len(), FIT_STARTS);
        for s in &fit.start_log_marginals {
            assert!(fit.gp.log_marginal_likelihood() >= *s);
        }
    }

    #[test]
    fn white_noise_is_attributed_to_noise() {
        let mut rng = rng_from_seed(21);
        let noise = Normal::new(0.0, 1.0).unwrap();
        for trial in 0..5 {
            let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 / 99.0]).collect();
            let y: Vec<f64> = (0..100).map(|_| noise.sample(&mut rng)).collect();
            let fit = fit_gp(&x, &y, trial).unwrap();
            let h = fit.gp.hyper();
            let v = variance_or_one(&y);
            assert!(
                h.lengthscales[0] >= LENGTHSCALE_BOUNDS.1 * 0.99 || h.noise_variance() >= 0.5 * v,
                "{h:?} var {v}"
            );
        }
    }

    #[test]
    fn singular_covariance_reports_diagnostics() {
        let x = vec![vec![0.0]; 3];
        let h = KernelHyperparams::new(1e20, vec![1.0], 1e-30);
        match GaussianProcess::new(&x, &[1.0, 2.0, 3.0], h) {
            Err(CalibError::NotPositiveDefinite { jitter, n, .. }) => {
                assert_eq!(jitter, JITTER_MAX);
                assert_eq!(n, 3);
            }
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn query_dimension_mismatch() {
        let gp = GaussianProcess::new(&[vec![0.0]], &[1.0], unit(1)).unwrap();
        assert!(gp.predict(&[0.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn posterior_variance_below_prior(seed in any::<u64>(), q in prop::collection::vec(-1.0f64..2.0, 2)) {
            let mut rng = rng_from_seed(seed);
            let x: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.random(), rng.random()]).collect();
            let y: Vec<f64> = (0..8).map(|_| rng.random()).collect();
            let h = KernelHyperparams::new(rng.random_range(0.1..3.0), vec![rng.random_range(0.05..2.0); 2], 1e-6);
            let s2 = h.signal_variance;
            let gp = GaussianProcess::new(&x, &y, h).unwrap();
            let p = gp.predict(&q).unwrap();
            prop_assert!(p.sd >= 0.0);
            prop_assert!(p.sd * p.sd <= s2 + 1e-9);
        }
    }
}
