use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::kmeans::{column_variances, kmeans_plus_plus};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{log_sum_exp, normal_ln_pdf};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const MAX_ITER: usize = 300;
pub const TOL: f64 = 1e-6;
pub const RESTARTS: usize = 5;
/// Components with less total responsibility than this are reinitialized.
const EMPTY_MASS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MixtureKind {
    Parametric { k: usize },
    Nonparametric { gamma: f64 },
}

/// Diagonal Gaussian mixture over latent codes with hard assignments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub kind: MixtureKind,
    pub weights: Vec<f64>,
    /// K x H.
    pub means: DMatrix<f64>,
    /// K x H.
    pub variances: DMatrix<f64>,
    /// Component of each row of the input, `0..K`.
    pub assignments: Vec<usize>,
    /// Final log-likelihood (GMM) or best joint log posterior (DPMM).
    pub score: f64,
    /// Score per iteration or sweep of the kept run.
    pub score_trace: Vec<f64>,
}

impl MixtureModel {
    pub fn num_components(&self) -> usize {
        self.weights.len()
    }
}

struct Gmm {
    weights: Vec<f64>,
    means: DMatrix<f64>,
    vars: DMatrix<f64>,
}

/// `ln(pi_k N(x_a | mu_k, var_k))`, N x K.
fn log_joint(data: &DMatrix<f64>, g: &Gmm) -> DMatrix<f64> {
    let (n, d) = data.shape();
    let k = g.weights.len();
    DMatrix::from_fn(n, k, |a, j| {
        g.weights[j].ln()
            + (0..d)
                .map(|s| normal_ln_pdf(data[(a, s)], g.means[(j, s)], g.vars[(j, s)].sqrt()))
                .sum::<f64>()
    })
}

fn run_em(data: &DMatrix<f64>, k: usize, seed: u64) -> (Gmm, Vec<f64>, DMatrix<f64>) {
    let (n, d) = data.shape();
    let mut rng = rng_from_seed(seed);
    let centers = kmeans_plus_plus(data, k, &mut rng);
    let global = column_variances(data).map(|v| v.max(VARIANCE_FLOOR));
    let mut g = Gmm {
        weights: vec![1.0 / k as f64; k],
        means: DMatrix::from_fn(k, d, |j, s| centers[j][s]),
        vars: DMatrix::from_fn(k, d, |_, s| global[s]),
    };
    let mut trace: Vec<f64> = Vec::new();
    let mut lj = log_joint(data, &g);
    for _ in 0..MAX_ITER {
        let row_norm: Vec<f64> = (0..n)
            .map(|a| log_sum_exp(&lj.row(a).iter().copied().collect::<Vec<_>>()))
            .collect();
        let ll: f64 = row_norm.iter().sum();
        if let Some(&prev) = trace.last() {
            debug_assert!(ll >= prev - 1e-9 * (1.0 + f64::abs(prev)), "GMM EM decreased: {prev} -> {ll}");
            trace.push(ll);
            if ll - prev < TOL {
                break;
            }
        } else {
            trace.push(ll);
        }
        let resp = DMatrix::from_fn(n, k, |a, j| (lj[(a, j)] - row_norm[a]).exp());
        let mut reinit = false;
        for j in 0..k {
            let nk: f64 = resp.column(j).sum();
            if nk < EMPTY_MASS {
                // reseed at the worst-explained point
                let worst = (0..n)
                    .min_by(|&a, &b| row_norm[a].total_cmp(&row_norm[b]))
                    .unwrap_or(0);
                for s in 0..d {
                    g.means[(j, s)] = data[(worst, s)];
                    g.vars[(j, s)] = global[s];
                }
                g.weights[j] = 1.0 / n as f64;
                reinit = true;
                continue;
            }
            g.weights[j] = nk / n as f64;
            for s in 0..d {
                let m = (0..n).map(|a| resp[(a, j)] * data[(a, s)]).sum::<f64>() / nk;
                let v = (0..n).map(|a| resp[(a, j)] * (data[(a, s)] - m).powi(2)).sum::<f64>() / nk;
                g.means[(j, s)] = m;
                g.vars[(j, s)] = v.max(VARIANCE_FLOOR);
            }
        }
        let total: f64 = g.weights.iter().sum();
        g.weights.iter_mut().for_each(|w| *w /= total);
        if reinit {
            // EM restarts from the reseeded parameters
            trace.clear();
        }
        lj = log_joint(data, &g);
    }
    (g, trace, lj)
}

/// EM fit of a K-component diagonal GMM, best of `RESTARTS` k-means++ starts.
pub fn fit_gmm(codes: &DMatrix<f64>, k: usize, seed: u64) -> Result<MixtureModel> {
    let n = codes.nrows();
    if k == 0 || k > n {
        return Err(CalibError::InvalidInput(format!("GMM needs 1 <= K <= {n}, got {k}")));
    }
    if codes.ncols() == 0 || codes.iter().any(|v| !v.is_finite()) {
        return Err(CalibError::InvalidInput("GMM codes must be finite and nonempty".into()));
    }
    let restarts = if k == 1 { 1 } else { RESTARTS };
    let mut best: Option<(Gmm, Vec<f64>, DMatrix<f64>)> = None;
    for r in 0..restarts {
        let run = run_em(codes, k, derive_seed(seed, &[r as u64]));
        let score = *run.1.last().unwrap_or(&f64::NEG_INFINITY);
        if best
            .as_ref()
            .is_none_or(|b| score > *b.1.last().unwrap_or(&f64::NEG_INFINITY))
        {
            best = Some(run);
        }
    }
    let (g, trace, lj) = best.expect("at least one restart");
    let assignments = (0..n)
        .map(|a| {
            (0..k)
                .max_by(|&x, &y| lj[(a, x)].total_cmp(&lj[(a, y)]).then(y.cmp(&x)))
                .unwrap_or(0)
        })
        .collect();
    Ok(MixtureModel {
        kind: MixtureKind::Parametric { k },
        weights: g.weights,
        means: g.means,
        variances: g.vars,
        assignments,
        score: *trace.last().unwrap_or(&f64::NEG_INFINITY),
        score_trace: trace,
    })
}

/// Fraction of points whose label matches the reference after matching
/// labels greedily by largest contingency-table cell.
pub fn permutation_accuracy(labels: &[usize], reference: &[usize]) -> f64 {
    let ka = labels.iter().copied().max().map_or(0, |m| m + 1);
    let kb = reference.iter().copied().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; kb]; ka];
    for (a, b) in labels.iter().zip(reference) {
        table[*a][*b] += 1;
    }
    let mut used_a = vec![false; ka];
    let mut used_b = vec![false; kb];
    let mut matched = 0;
    for _ in 0..ka.min(kb) {
        let mut best = (0, 0, 0);
        for (i, row) in table.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if !used_a[i] && !used_b[j] && c >= best.2 {
                    best = (i, j, c);
                }
            }
        }
        used_a[best.0] = true;
        used_b[best.1] = true;
        matched += best.2;
    }
    matched as f64 / labels.len().max(1) as f64
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn blobs(n_each: usize, sd: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = rng_from_seed(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        let data = DMatrix::from_fn(2 * n_each, 2, |a, s| {
            let centre = if s == 0 {
                if a < n_each {
                    -5.0
                } else {
                    5.0
                }
            } else {
                0.0
            };
            centre + noise.sample(&mut rng)
        });
        (data, (0..2 * n_each).map(|a| usize::from(a >= n_each)).collect())
    }

    #[test]
    fn single_component_is_data_moments() {
        let data = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 2.0, 1.0, 4.0, 3.0, 6.0, 3.0]);
        let m = fit_gmm(&data, 1, 0).unwrap();
        assert!((m.means[(0, 0)] - 3.0).abs() < 1e-12);
        assert!((m.means[(0, 1)] - 2.0).abs() < 1e-12);
        assert!((m.variances[(0, 0)] - 5.0).abs() < 1e-12);
        assert!((m.variances[(0, 1)] - 1.0).abs() < 1e-12);
        assert!(m.assignments.iter().all(|&z| z == 0));
    }

    #[test]
    fn separates_two_blobs() {
        let (data, truth) = blobs(100, 0.3, 4);
        let m = fit_gmm(&data, 2, 1).unwrap();
        assert!(permutation_accuracy(&m.assignments, &truth) >= 0.99);
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m.variances.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn duplicate_points_use_the_floor() {
        let data = DMatrix::from_element(6, 2, 1.0);
        let m = fit_gmm(&data, 2, 3).unwrap();
        assert!(m.variances.iter().all(|&v| v >= VARIANCE_FLOOR));
        assert!(m.score.is_finite());
    }

    #[test]
    fn invalid_component_counts() {
        let data = DMatrix::from_element(3, 1, 0.0);
        assert!(fit_gmm(&data, 0, 0).is_err());
        assert!(fit_gmm(&data, 4, 0).is_err());
    }

    #[test]
    fn accuracy_is_label_permutation_invariant() {
        assert_eq!(permutation_accuracy(&[1, 1, 0, 0], &[0, 0, 1, 1]), 1.0);
        assert_eq!(permutation_accuracy(&[0, 1, 0, 0], &[0, 0, 1, 1]), 0.75);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn em_log_likelihood_is_non_decreasing(seed in any::<u64>(), k in 1usize..4) {
            let mut rng = rng_from_seed(seed);
            let data = DMatrix::from_fn(40, 2, |_, _| rng.random::<f64>() * 6.0);
            let m = fit_gmm(&data, k, seed).unwrap();
            for w in m.score_trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs()), "{} -> {}", w[0], w[1]);
            }
        }
    }
}
