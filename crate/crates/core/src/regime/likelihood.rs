use nalgebra::DMatrix;

use crate::error::{check_dim, CalibError, Result};
use crate::stats::normal_ln_pdf;
use crate::trace::{SummaryTrace, ValidationData};

/// Lower bound on the simulation standard deviation `0.1 * |mu|`.
pub const SIGMA_FLOOR: f64 = 1e-6;
/// Simulation standard deviation as a fraction of the simulation mean.
pub const SIGMA_FRACTION: f64 = 0.1;

/// Gaussian likelihoods of the validation data under each candidate's
/// simulation mean, stored in log space.
#[derive(Debug, Clone)]
pub struct LikelihoodMatrix {
    /// One S x T matrix of `ln L_{s,t}` per candidate.
    pub log_per_stat: Vec<DMatrix<f64>>,
    /// T x I matrix of `ln L_t^i = sum_s ln L_{s,t}^i`.
    pub log_joint: DMatrix<f64>,
    /// One S x T matrix of sigma per candidate.
    pub sigma: Vec<DMatrix<f64>>,
}

impl LikelihoodMatrix {
    pub fn num_candidates(&self) -> usize {
        self.log_joint.ncols()
    }

    pub fn per_stat(&self, s: usize, t: usize, i: usize) -> f64 {
        self.log_per_stat[i][(s, t)].exp()
    }

    pub fn joint(&self, t: usize, i: usize) -> f64 {
        self.log_joint[(t, i)].exp()
    }

    /// `sum_t -ln L_t^i` for candidate `i`.
    pub fn neg_log_likelihood(&self, i: usize) -> f64 {
        -self.log_joint.column(i).sum()
    }
}

/// `L_{s,t}^i = N(d_{s,t} | mu_{s,t}^i, sigma_{s,t}^i)` with
/// `sigma = max(0.1 |mu|, SIGMA_FLOOR)`.
pub fn compute_likelihoods(sim_means: &[SummaryTrace], validation: &ValidationData) -> Result<LikelihoodMatrix> {
    if sim_means.is_empty() {
        return Err(CalibError::InvalidInput("no candidate simulation means".into()));
    }
    let d = &validation.trace.stats;
    let (s_count, horizon) = d.shape();
    let mut log_per_stat = Vec::with_capacity(sim_means.len());
    let mut sigma = Vec::with_capacity(sim_means.len());
    let mut log_joint = DMatrix::zeros(horizon, sim_means.len());
    for (i, mean) in sim_means.iter().enumerate() {
        check_dim("likelihood statistic count", s_count, mean.num_stats())?;
        check_dim("likelihood horizon", horizon, mean.horizon())?;
        let sig = mean.stats.map(|m| (SIGMA_FRACTION * m.abs()).max(SIGMA_FLOOR));
        let lp = DMatrix::from_fn(s_count, horizon, |s, t| {
            normal_ln_pdf(d[(s, t)], mean.stats[(s, t)], sig[(s, t)])
        });
        for t in 0..horizon {
            log_joint[(t, i)] = lp.column(t).sum();
        }
        log_per_stat.push(lp);
        sigma.push(sig);
    }
    Ok(LikelihoodMatrix {
        log_per_stat,
        log_joint,
        sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn trace(v: &[f64], s: usize) -> SummaryTrace {
        let names = (0..s).map(|i| format!("s{i}")).collect();
        SummaryTrace::new(names, DMatrix::from_row_slice(s, v.len() / s, v)).unwrap()
    }

    #[test]
    fn density_peak_at_mean() {
        let mu = trace(&[10.0, 4.0], 1);
        let val = ValidationData::from_trace(mu.clone());
        let lk = compute_likelihoods(&[mu], &val).unwrap();
        assert_relative_eq!(lk.per_stat(0, 0, 0), 0.398_942_280_401_432_7, epsilon = 1e-12);
        let sd = 0.4;
        assert_relative_eq!(
            lk.per_stat(0, 1, 0),
            1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sd),
            epsilon = 1e-12
        );
    }

    #[test]
    fn joint_is_product_over_stats() {
        // densities 0.3 and 0.5 -> joint 0.15, built by choosing sigma so that
        // the peak density equals the target value
        let peak_mean = |p: f64| 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * p) / SIGMA_FRACTION;
        let mu = trace(&[peak_mean(0.3), peak_mean(0.5)], 2);
        let val = ValidationData::from_trace(mu.clone());
        let lk = compute_likelihoods(&[mu], &val).unwrap();
        assert_relative_eq!(lk.per_stat(0, 0, 0), 0.3, epsilon = 1e-12);
        assert_relative_eq!(lk.per_stat(1, 0, 0), 0.5, epsilon = 1e-12);
        assert_relative_eq!(lk.joint(0, 0), 0.15, epsilon = 1e-12);
    }

    #[test]
    fn zero_mean_uses_floor() {
        let mu = trace(&[0.0], 1);
        let val = ValidationData::from_trace(mu.clone());
        let lk = compute_likelihoods(&[mu], &val).unwrap();
        assert_eq!(lk.sigma[0][(0, 0)], SIGMA_FLOOR);
        assert!(lk.log_joint[(0, 0)].is_finite());
    }

    #[test]
    fn dimension_mismatch() {
        let mu = trace(&[1.0, 2.0], 1);
        let val = ValidationData::from_trace(trace(&[1.0, 2.0, 3.0], 1));
        assert!(compute_likelihoods(&[mu], &val).is_err());
    }
}
