//! Dirichlet process mixture fitted by collapsed Gibbs sampling with a
//! per-dimension Normal-Inverse-Gamma base measure on standardized codes.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{CalibError, Result};
use crate::rng::rng_from_seed;
use crate::stats::{ln_gamma, log_sum_exp};

use super::gmm::{MixtureKind, MixtureModel, VARIANCE_FLOOR};

/// Normal-Inverse-Gamma hyperparameters shared by every dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NigPrior {
    pub mu0: f64,
    pub kappa0: f64,
    pub a0: f64,
    pub b0: f64,
}

impl Default for NigPrior {
    fn default() -> Self {
        Self {
            mu0: 0.0,
            kappa0: 0.01,
            a0: 1.0,
            b0: 1.0,
        }
    }
}

pub const DEFAULT_SWEEPS: usize = 100;

#[derive(Debug, Clone)]
struct Component {
    n: usize,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

impl Component {
    fn empty(d: usize) -> Self {
        Self {
            n: 0,
            sum: vec![0.0; d],
            sumsq: vec![0.0; d],
        }
    }

    fn add(&mut self, x: &[f64]) {
        self.n += 1;
        for (j, v) in x.iter().enumerate() {
            self.sum[j] += v;
            self.sumsq[j] += v * v;
        }
    }

    fn remove(&mut self, x: &[f64]) {
        self.n -= 1;
        for (j, v) in x.iter().enumerate() {
            self.sum[j] -= v;
            self.sumsq[j] -= v * v;
        }
    }

    /// Posterior (mu_n, kappa_n, a_n, b_n) for dimension `j`.
    fn posterior(&self, j: usize, p: &NigPrior) -> (f64, f64, f64, f64) {
        let n = self.n as f64;
        let kn = p.kappa0 + n;
        let mn = (p.kappa0 * p.mu0 + self.sum[j]) / kn;
        let an = p.a0 + 0.5 * n;
        let ss = if self.n > 0 {
            let xbar = self.sum[j] / n;
            (self.sumsq[j] - n * xbar * xbar).max(0.0) + p.kappa0 * n * (xbar - p.mu0).powi(2) / kn
        } else {
            0.0
        };
        (mn, kn, an, p.b0 + 0.5 * ss)
    }

    /// Log posterior predictive density of `x` (product of Student-t).
    fn ln_predictive(&self, x: &[f64], p: &NigPrior) -> f64 {
        x.iter()
            .enumerate()
            .map(|(j, v)| {
                let (mn, kn, an, bn) = self.posterior(j, p);
                let nu = 2.0 * an;
                let scale = (bn * (kn + 1.0) / (an * kn)).sqrt();
                let z = (v - mn) / scale;
                ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu)
                    - 0.5 * (nu * std::f64::consts::PI).ln()
                    - scale.ln()
                    - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
            })
            .sum()
    }

    /// Log marginal likelihood of the component's data.
    fn ln_marginal(&self, p: &NigPrior) -> f64 {
        let n = self.n as f64;
        (0..self.sum.len())
            .map(|j| {
                let (_, kn, an, bn) = self.posterior(j, p);
                ln_gamma(an) - ln_gamma(p.a0) + p.a0 * p.b0.ln() - an * bn.ln() + 0.5 * (p.kappa0 / kn).ln()
                    - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
            })
            .sum()
    }
}

fn joint_log_posterior(comps: &[Component], gamma: f64, n: usize, p: &NigPrior) -> f64 {
    let k = comps.len() as f64;
    let crp = k * gamma.ln() + ln_gamma(gamma) - ln_gamma(gamma + n as f64)
        + comps.iter().map(|c| ln_gamma(c.n as f64)).sum::<f64>();
    crp + comps.iter().map(|c| c.ln_marginal(p)).sum::<f64>()
}

fn sample_log_weights<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> usize {
    let z = log_sum_exp(log_w);
    let mut u: f64 = rng.random();
    for (i, lw) in log_w.iter().enumerate() {
        u -= (lw - z).exp();
        if u < 0.0 {
            return i;
        }
    }
    log_w.len() - 1
}

/// Per-column standardization; zero-variance columns are only centred.
fn standardize(codes: &DMatrix<f64>) -> DMatrix<f64> {
    let n = codes.nrows() as f64;
    let mut out = codes.clone();
    for mut col in out.column_iter_mut() {
        let m = col.sum() / n;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        col.iter_mut().for_each(|v| *v = (*v - m) / sd);
    }
    out
}

/// Collapsed Gibbs sampling for `sweeps` sweeps after a sequential CRP
/// initialisation; returns the partition with the highest joint posterior.
pub fn fit_dpmm(codes: &DMatrix<f64>, gamma: f64, sweeps: usize, seed: u64) -> Result<MixtureModel> {
    fit_dpmm_with_prior(codes, gamma, sweeps, &NigPrior::default(), seed)
}

pub fn fit_dpmm_with_prior(
    codes: &DMatrix<f64>,
    gamma: f64,
    sweeps: usize,
    prior: &NigPrior,
    seed: u64,
) -> Result<MixtureModel> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(CalibError::InvalidInput(format!("DPMM concentration must be positive, got {gamma}")));
    }
    let (n, d) = codes.shape();
    if n == 0 || d == 0 || codes.iter().any(|v| !v.is_finite()) {
        return Err(CalibError::InvalidInput("DPMM codes must be finite and nonempty".into()));
    }
    let x = standardize(codes);
    let rows: Vec<Vec<f64>> = (0..n).map(|a| x.row(a).iter().copied().collect()).collect();
    let mut rng = rng_from_seed(seed);
    let mut comps: Vec<Component> = Vec::new();
    let mut z = vec![0usize; n];
    let prior_comp = Component::empty(d);

    let choose = |comps: &[Component], xa: &[f64], rng: &mut rand_chacha::ChaCha8Rng| -> usize {
        let mut lw: Vec<f64> = comps
            .iter()
            .map(|c| (c.n as f64).ln() + c.ln_predictive(xa, prior))
            .collect();
        lw.push(gamma.ln() + prior_comp.ln_predictive(xa, prior));
        sample_log_weights(&lw, rng)
    };

    for a in 0..n {
        let k = choose(&comps, &rows[a], &mut rng);
        if k == comps.len() {
            comps.push(Component::empty(d));
        }
        comps[k].add(&rows[a]);
        z[a] = k;
    }
    let mut best_score = joint_log_posterior(&comps, gamma, n, prior);
    let mut best_z = z.clone();
    let mut trace = vec![best_score];
    for _ in 0..sweeps {
        for a in 0..n {
            let old = z[a];
            comps[old].remove(&rows[a]);
            if comps[old].n == 0 {
                comps.swap_remove(old);
                let moved = comps.len();
                // the component previously last now lives at `old`
                for zi in z.iter_mut() {
                    if *zi == moved {
                        *zi = old;
                    }
                }
            }
            let k = choose(&comps, &rows[a], &mut rng);
            if k == comps.len() {
                comps.push(Component::empty(d));
            }
            comps[k].add(&rows[a]);
            z[a] = k;
        }
        let score = joint_log_posterior(&comps, gamma, n, prior);
        if score > best_score {
            best_score = score;
            best_z = z.clone();
        }
        trace.push(best_score);
    }
    Ok(summarize_partition(codes, &best_z, MixtureKind::Nonparametric { gamma }, best_score, trace))
}

/// Relabels a partition by first appearance and computes weights and
/// per-component moments in the original code space.
fn summarize_partition(codes: &DMatrix<f64>, z: &[usize], kind: MixtureKind, score: f64, trace: Vec<f64>) -> MixtureModel {
    let (n, d) = codes.shape();
    let mut relabel = std::collections::HashMap::new();
    let assignments: Vec<usize> = z
        .iter()
        .map(|&k| {
            let next = relabel.len();
            *relabel.entry(k).or_insert(next)
        })
        .collect();
    let k = relabel.len();
    let mut counts = vec![0usize; k];
    let mut means = DMatrix::<f64>::zeros(k, d);
    for (a, &c) in assignments.iter().enumerate() {
        counts[c] += 1;
        for s in 0..d {
            means[(c, s)] += codes[(a, s)];
        }
    }
    for c in 0..k {
        for s in 0..d {
            means[(c, s)] /= counts[c] as f64;
        }
    }
    let mut variances = DMatrix::<f64>::zeros(k, d);
    for (a, &c) in assignments.iter().enumerate() {
        for s in 0..d {
            variances[(c, s)] += (codes[(a, s)] - means[(c, s)]).powi(2);
        }
    }
    for c in 0..k {
        for s in 0..d {
            variances[(c, s)] = (variances[(c, s)] / counts[c] as f64).max(VARIANCE_FLOOR);
        }
    }
    MixtureModel {
        kind,
        weights: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        means,
        variances,
        assignments,
        score,
        score_trace: trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::gmm::tests::blobs;
    use crate::clustering::gmm::permutation_accuracy;

    #[test]
    fn recovers_two_blobs() {
        let mut hits = 0;
        for seed in 0..20 {
            let (data, truth) = blobs(50, 0.3, 1000 + seed);
            let m = fit_dpmm(&data, 1.0, 50, seed).unwrap();
            if m.num_components() == 2 && permutation_accuracy(&m.assignments, &truth) >= 0.99 {
                hits += 1;
            }
        }
        assert!(hits >= 18, "{hits}/20");
    }

    #[test]
    fn component_count_grows_with_concentration() {
        let mut means = Vec::new();
        for gamma in [1e-4, 1.0, 100.0] {
            let mut total = 0;
            for seed in 0..5 {
                let (data, _) = blobs(20, 1.5, 50 + seed);
                total += fit_dpmm(&data, gamma, 30, seed).unwrap().num_components();
            }
            means.push(total as f64 / 5.0);
        }
        assert!(means[0] <= means[1] && means[1] <= means[2], "{means:?}");
        assert!(means[2] > means[0]);
    }

    #[test]
    fn single_point_is_one_component() {
        let data = DMatrix::from_row_slice(1, 3, &[0.2, -1.0, 4.0]);
        let m = fit_dpmm(&data, 1.0, 10, 0).unwrap();
        assert_eq!(m.num_components(), 1);
        assert_eq!(m.assignments, vec![0]);
    }

    #[test]
    fn best_score_is_monotone_and_weights_sum_to_one() {
        let (data, _) = blobs(15, 1.0, 3);
        let m = fit_dpmm(&data, 1.0, 40, 3).unwrap();
        assert!(m.score_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(m.assignments.len(), 30);
    }

    #[test]
    fn rejects_nonpositive_gamma() {
        let data = DMatrix::from_element(2, 1, 0.0);
        assert!(fit_dpmm(&data, 0.0, 1, 0).is_err());
    }
}
