use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::kmeans::{column_variances, kmeans_plus_plus, lloyd};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::normal_ln_pdf;

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const MAX_ITER: usize = 200;
pub const TOL: f64 = 1e-6;
pub const RESTARTS: usize = 5;
const SELF_LOOP: f64 = 0.8;

/// Baum-Welch fit of a Gaussian HMM with diagonal emissions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmFit {
    /// Viterbi path, 0-based regime ids.
    pub labels: Vec<usize>,
    pub initial: DVector<f64>,
    /// K x K, rows sum to 1.
    pub transition: DMatrix<f64>,
    /// K x S emission means.
    pub means: DMatrix<f64>,
    /// K x S emission standard deviations.
    pub sds: DMatrix<f64>,
    pub log_likelihood: f64,
    /// Log-likelihood at the start of each EM iteration of the kept restart.
    pub ll_trace: Vec<f64>,
    /// Set when any emission variance hit `VARIANCE_FLOOR`.
    pub variance_floored: bool,
}

impl HmmFit {
    pub fn num_regimes(&self) -> usize {
        self.initial.len()
    }
}

struct Params {
    initial: DVector<f64>,
    transition: DMatrix<f64>,
    means: DMatrix<f64>,
    vars: DMatrix<f64>,
    floored: bool,
}

/// `ln p(o_t | z_t = k)`, T x K.
fn log_emissions(obs: &DMatrix<f64>, p: &Params) -> DMatrix<f64> {
    let (t_len, s_len) = obs.shape();
    let k = p.means.nrows();
    DMatrix::from_fn(t_len, k, |t, j| {
        (0..s_len)
            .map(|s| normal_ln_pdf(obs[(t, s)], p.means[(j, s)], p.vars[(j, s)].sqrt()))
            .sum()
    })
}

/// Scaled forward-backward. Returns (log-likelihood, gamma T x K, expected
/// transition counts K x K).
fn e_step(obs: &DMatrix<f64>, p: &Params) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let t_len = obs.nrows();
    let k = p.initial.len();
    let log_b = log_emissions(obs, p);
    let mut b = DMatrix::zeros(t_len, k);
    let mut shift = vec![0.0; t_len];
    for t in 0..t_len {
        let m = log_b.row(t).max();
        shift[t] = m;
        for j in 0..k {
            b[(t, j)] = (log_b[(t, j)] - m).exp();
        }
    }
    let mut alpha = DMatrix::zeros(t_len, k);
    let mut scale = vec![0.0; t_len];
    let mut ll = 0.0;
    for t in 0..t_len {
        for j in 0..k {
            let prior = if t == 0 {
                p.initial[j]
            } else {
                (0..k).map(|i| alpha[(t - 1, i)] * p.transition[(i, j)]).sum()
            };
            alpha[(t, j)] = prior * b[(t, j)];
        }
        let c: f64 = alpha.row(t).sum();
        // c > 0: at least one state has b = 1 and the chain can reach it
        // unless transitions collapsed; guard against that case.
        let c = if c > 0.0 { c } else { f64::MIN_POSITIVE };
        scale[t] = c;
        for j in 0..k {
            alpha[(t, j)] /= c;
        }
        ll += c.ln() + shift[t];
    }
    let mut beta = DMatrix::from_element(t_len, k, 1.0);
    for t in (0..t_len.saturating_sub(1)).rev() {
        for i in 0..k {
            beta[(t, i)] = (0..k)
                .map(|j| p.transition[(i, j)] * b[(t + 1, j)] * beta[(t + 1, j)])
                .sum::<f64>()
                / scale[t + 1];
        }
    }
    let mut gamma = alpha.component_mul(&beta);
    for t in 0..t_len {
        let s: f64 = gamma.row(t).sum();
        if s > 0.0 {
            for j in 0..k {
                gamma[(t, j)] /= s;
            }
        }
    }
    let mut xi = DMatrix::zeros(k, k);
    for t in 0..t_len.saturating_sub(1) {
        for i in 0..k {
            for j in 0..k {
                xi[(i, j)] += alpha[(t, i)] * p.transition[(i, j)] * b[(t + 1, j)] * beta[(t + 1, j)]
                    / scale[t + 1];
            }
        }
    }
    (ll, gamma, xi)
}

fn m_step(obs: &DMatrix<f64>, gamma: &DMatrix<f64>, xi: &DMatrix<f64>, p: &mut Params) {
    let (t_len, s_len) = obs.shape();
    let k = p.initial.len();
    p.initial = gamma.row(0).transpose();
    for i in 0..k {
        let row_total: f64 = xi.row(i).sum();
        if row_total > 0.0 {
            for j in 0..k {
                p.transition[(i, j)] = xi[(i, j)] / row_total;
            }
        }
    }
    for j in 0..k {
        let w: f64 = gamma.column(j).sum();
        if w <= 0.0 {
            continue;
        }
        for s in 0..s_len {
            let m = (0..t_len).map(|t| gamma[(t, j)] * obs[(t, s)]).sum::<f64>() / w;
            let v = (0..t_len)
                .map(|t| gamma[(t, j)] * (obs[(t, s)] - m).powi(2))
                .sum::<f64>()
                / w;
            p.means[(j, s)] = m;
            if v < VARIANCE_FLOOR {
                p.floored = true;
            }
            p.vars[(j, s)] = v.max(VARIANCE_FLOOR);
        }
    }
}

fn viterbi(obs: &DMatrix<f64>, p: &Params) -> Vec<usize> {
    let t_len = obs.nrows();
    let k = p.initial.len();
    let log_b = log_emissions(obs, p);
    let log_a = p.transition.map(f64::ln);
    let mut delta = DMatrix::from_element(t_len, k, f64::NEG_INFINITY);
    let mut back = vec![vec![0usize; k]; t_len];
    for j in 0..k {
        delta[(0, j)] = p.initial[j].ln() + log_b[(0, j)];
    }
    for t in 1..t_len {
        for j in 0..k {
            let (arg, best) = (0..k)
                .map(|i| (i, delta[(t - 1, i)] + log_a[(i, j)]))
                .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            delta[(t, j)] = best + log_b[(t, j)];
            back[t][j] = arg;
        }
    }
    let mut path = vec![0; t_len];
    path[t_len - 1] = (0..k)
        .fold((0, f64::NEG_INFINITY), |acc, j| {
            if delta[(t_len - 1, j)] > acc.1 {
                (j, delta[(t_len - 1, j)])
            } else {
                acc
            }
        })
        .0;
    for t in (1..t_len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    path
}

fn initial_params(obs: &DMatrix<f64>, k: usize, seed: u64) -> Params {
    let s_len = obs.ncols();
    let mut rng = rng_from_seed(seed);
    let (centers, _) = lloyd(obs, kmeans_plus_plus(obs, k, &mut rng), 100);
    let means = DMatrix::from_fn(k, s_len, |j, s| centers[j][s]);
    let var = column_variances(obs);
    let floored = var.iter().any(|&v| v < VARIANCE_FLOOR);
    let vars = DMatrix::from_fn(k, s_len, |_, s| var[s].max(VARIANCE_FLOOR));
    let off = if k > 1 { (1.0 - SELF_LOOP) / (k - 1) as f64 } else { 0.0 };
    let transition = DMatrix::from_fn(k, k, |i, j| {
        if k == 1 {
            1.0
        } else if i == j {
            SELF_LOOP
        } else {
            off
        }
    });
    Params {
        initial: DVector::from_element(k, 1.0 / k as f64),
        transition,
        means,
        vars,
        floored,
    }
}

fn fit_once(obs: &DMatrix<f64>, k: usize, seed: u64) -> HmmFit {
    let mut p = initial_params(obs, k, seed);
    let mut trace = Vec::new();
    for _ in 0..MAX_ITER {
        let (ll, gamma, xi) = e_step(obs, &p);
        if let Some(&prev) = trace.last() {
            debug_assert!(
                ll >= prev - 1e-9 * (1.0 + f64::abs(prev)),
                "EM log-likelihood decreased: {prev} -> {ll}"
            );
            trace.push(ll);
            if ll - prev < TOL {
                break;
            }
        } else {
            trace.push(ll);
        }
        m_step(obs, &gamma, &xi, &mut p);
    }
    let labels = viterbi(obs, &p);
    HmmFit {
        labels,
        log_likelihood: *trace.last().unwrap_or(&f64::NEG_INFINITY),
        ll_trace: trace,
        sds: p.vars.map(f64::sqrt),
        initial: p.initial,
        transition: p.transition,
        means: p.means,
        variance_floored: p.floored,
    }
}

/// Fits a K-regime HMM to the T x S observation matrix and returns the best
/// of `RESTARTS` k-means++ initialisations.
pub fn fit_hmm(obs: &DMatrix<f64>, k: usize, seed: u64) -> Result<HmmFit> {
    if k == 0 {
        return Err(CalibError::InvalidInput("HMM needs at least one regime".into()));
    }
    if obs.nrows() < k {
        return Err(CalibError::InvalidInput(format!(
            "HMM with {k} regimes needs at least {k} observations, got {}",
            obs.nrows()
        )));
    }
    if obs.ncols() == 0 || obs.iter().any(|v| !v.is_finite()) {
        return Err(CalibError::InvalidInput("HMM observations must be finite and nonempty".into()));
    }
    let restarts = if k == 1 { 1 } else { RESTARTS };
    let mut best: Option<HmmFit> = None;
    for r in 0..restarts {
        let fit = fit_once(obs, k, derive_seed(seed, &[r as u64]));
        if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}
