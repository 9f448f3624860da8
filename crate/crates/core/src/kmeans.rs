//! k-means++ seeding and Lloyd refinement, used to initialise HMM emissions
//! and mixture components.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn sq_dist(data: &DMatrix<f64>, row: usize, c: &DVector<f64>) -> f64 {
    (0..data.ncols()).map(|j| (data[(row, j)] - c[j]).powi(2)).sum()
}

/// k-means++ seeding over the rows of `data`.
pub fn kmeans_plus_plus<R: Rng + ?Sized>(data: &DMatrix<f64>, k: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let n = data.nrows();
    let row = |i: usize| data.row(i).transpose();
    let mut centers = vec![row(rng.random_range(0..n))];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(data, i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    chosen = i;
                    break;
                }
                u -= d;
            }
            chosen
        };
        let c = row(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data, i, &c));
        }
        centers.push(c);
    }
    centers
}

/// Lloyd iterations from the given centers. Empty clusters keep their center.
pub fn lloyd(data: &DMatrix<f64>, mut centers: Vec<DVector<f64>>, max_iter: usize) -> (Vec<DVector<f64>>, Vec<usize>) {
    let n = data.nrows();
    let d = data.ncols();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let best = (0..centers.len())
                .min_by(|&a, &b| sq_dist(data, i, &centers[a]).total_cmp(&sq_dist(data, i, &centers[b])))
                .unwrap_or(0);
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![DVector::zeros(d); centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            sums[l] += data.row(i).transpose();
            counts[l] += 1;
        }
        for (k, c) in centers.iter_mut().enumerate() {
            if counts[k] > 0 {
                *c = &sums[k] / counts[k] as f64;
            }
        }
    }
    (centers, labels)
}

/// Per-column variance of the rows of `data` (population form).
pub fn column_variances(data: &DMatrix<f64>) -> DVector<f64> {
    let n = data.nrows() as f64;
    DVector::from_fn(data.ncols(), |j, _| {
        let col = data.column(j);
        let m = col.sum() / n;
        col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
    })
}
