//! Error measures between simulated and validation traces and between
//! estimated and reference parameters.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::params::DynamicSchedule;

/// Denominator floor for percentage errors.
pub const MAPE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    pub per_stat: Vec<f64>,
    pub total: f64,
}

/// Per-statistic `mean_t |sim - val| / max(|val|, eps)` and their mean.
pub fn mape(sim: &DMatrix<f64>, val: &DMatrix<f64>) -> Result<Mape> {
    check_dim("MAPE statistic count", val.nrows(), sim.nrows())?;
    check_dim("MAPE horizon", val.ncols(), sim.ncols())?;
    let t = val.ncols() as f64;
    let per_stat: Vec<f64> = (0..val.nrows())
        .map(|s| {
            (0..val.ncols())
                .map(|j| (sim[(s, j)] - val[(s, j)]).abs() / val[(s, j)].abs().max(MAPE_EPS))
                .sum::<f64>()
                / t
        })
        .collect();
    let total = per_stat.iter().sum::<f64>() / per_stat.len().max(1) as f64;
    Ok(Mape { per_stat, total })
}

/// Mean over parameters and timesteps of `|est - ref|`.
pub fn dynamic_mae(est: &DynamicSchedule, reference: &DynamicSchedule) -> Result<f64> {
    check_dim("MAE parameter count", reference.num_params(), est.num_params())?;
    check_dim("MAE horizon", reference.horizon(), est.horizon())?;
    let diff = &est.values - &reference.values;
    Ok(diff.abs().sum() / diff.len() as f64)
}

/// L2 norm of the flattened difference of two K x N matrices.
pub fn heterogeneous_euclidean(est: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<f64> {
    check_dim("Euclidean error rows", reference.nrows(), est.nrows())?;
    check_dim("Euclidean error columns", reference.ncols(), est.ncols())?;
    Ok((est - reference).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wealth::{synthetic_schedule, WealthModel};
    use approx::assert_relative_eq;

    #[test]
    fn mape_examples() {
        let val = DMatrix::from_row_slice(2, 2, &[100.0, 200.0, 3.0, 4.0]);
        assert_eq!(mape(&val, &val).unwrap().total, 0.0);
        let m = mape(&(&val * 1.1), &val).unwrap();
        assert!(m.per_stat.iter().all(|p| (p - 0.1).abs() < 1e-12));
        let sim = DMatrix::from_row_slice(2, 2, &[110.0, 180.0, 3.0, 4.0]);
        let m = mape(&sim, &val).unwrap();
        assert_relative_eq!(m.per_stat[0], 0.1, epsilon = 1e-12);
        assert_relative_eq!(m.total, 0.05, epsilon = 1e-12);
        assert!(mape(&sim, &DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn mape_zero_denominator_uses_floor() {
        let val = DMatrix::from_element(1, 1, 0.0);
        let sim = DMatrix::from_element(1, 1, 1e-9);
        assert_relative_eq!(mape(&sim, &val).unwrap().total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mae_examples() {
        let truth = synthetic_schedule(50);
        assert_eq!(dynamic_mae(&truth, &truth).unwrap(), 0.0);
        let ones = DynamicSchedule::constant(WealthModel::dynamic_ranges(), 50, &[1.0]).unwrap();
        assert_relative_eq!(dynamic_mae(&ones, &truth).unwrap(), 0.5, epsilon = 1e-12);
        let high = DynamicSchedule::constant(WealthModel::dynamic_ranges(), 50, &[1.5]).unwrap();
        assert_relative_eq!(dynamic_mae(&high, &truth).unwrap(), 0.4, epsilon = 1e-12);
        let short = DynamicSchedule::constant(WealthModel::dynamic_ranges(), 49, &[1.5]).unwrap();
        assert!(dynamic_mae(&short, &truth).is_err());
    }

    #[test]
    fn euclidean_examples() {
        let r = DMatrix::from_column_slice(2, 1, &[0.9, 0.1]);
        assert_eq!(heterogeneous_euclidean(&r, &r).unwrap(), 0.0);
        let e = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert_relative_eq!(heterogeneous_euclidean(&e, &r).unwrap(), 0.02f64.sqrt(), epsilon = 1e-12);
        assert!(heterogeneous_euclidean(&DMatrix::zeros(1, 1), &r).is_err());
    }
}
