//! Parameter containers: per-timestep dynamic schedules and per-cluster
//! heterogeneous assignments.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CalibError, Result};

/// A named parameter with a closed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl ParamRange {
    pub fn new(name: impl Into<String>, min: f64, max: f64) -> Self {
        Self {
            name: name.into(),
            min,
            max,
        }
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    /// Maps a value in the range onto [0, 1].
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.min) / self.width()
    }

    /// Inverse of [`normalize`](Self::normalize), clamped into the range.
    pub fn denormalize(&self, u: f64) -> f64 {
        (self.min + u * self.width()).clamp(self.min, self.max)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(CalibError::InvalidInput(format!(
                "parameter {} has empty or non-finite range [{}, {}]",
                self.name, self.min, self.max
            )));
        }
        Ok(())
    }
}

/// Time-varying parameters: one row per dynamic parameter, one column per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicSchedule {
    pub values: DMatrix<f64>,
    pub ranges: Vec<ParamRange>,
}

impl DynamicSchedule {
    pub fn new(values: DMatrix<f64>, ranges: Vec<ParamRange>) -> Result<Self> {
        let s = Self { values, ranges };
        s.validate()?;
        Ok(s)
    }

    /// Same value for every step.
    pub fn constant(ranges: Vec<ParamRange>, horizon: usize, values: &[f64]) -> Result<Self> {
        check_dim("constant schedule", ranges.len(), values.len())?;
        let m = DMatrix::from_fn(ranges.len(), horizon, |n, _| values[n]);
        Self::new(m, ranges)
    }

    pub fn num_params(&self) -> usize {
        self.values.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.values.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        check_dim("dynamic schedule rows", self.ranges.len(), self.values.nrows())?;
        for (n, range) in self.ranges.iter().enumerate() {
            range.validate()?;
            for t in 0..self.values.ncols() {
                let v = self.values[(n, t)];
                if !range.contains(v) {
                    return Err(CalibError::OutOfRange {
                        name: range.name.clone(),
                        index: t,
                        value: v,
                        min: range.min,
                        max: range.max,
                    });
                }
            }
        }
        Ok(())
    }

    /// Values mapped onto [0, 1] per parameter range.
    pub fn normalized(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.values.nrows(), self.values.ncols(), |n, t| {
            self.ranges[n].normalize(self.values[(n, t)])
        })
    }
}

/// Static parameters that differ per agent cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneousAssignment {
    /// Zero-based cluster label of each agent.
    pub cluster_of_agent: Vec<usize>,
    /// K_het x N_het parameter values.
    pub values: DMatrix<f64>,
    pub ranges: Vec<ParamRange>,
}

impl HeterogeneousAssignment {
    pub fn new(
        cluster_of_agent: Vec<usize>,
        values: DMatrix<f64>,
        ranges: Vec<ParamRange>,
    ) -> Result<Self> {
        let h = Self {
            cluster_of_agent,
            values,
            ranges,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn num_clusters(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.values.ncols()
    }

    /// Flattened cluster-major parameter vector of length K_het * N_het.
    pub fn flat_values(&self) -> Vec<f64> {
        let (k, n) = self.values.shape();
        (0..k)
            .flat_map(|c| (0..n).map(move |p| (c, p)))
            .map(|(c, p)| self.values[(c, p)])
            .collect()
    }

    /// Copy with parameter values replaced by a cluster-major flat vector.
    pub fn with_flat_values(&self, flat: &[f64]) -> Result<Self> {
        let (k, n) = self.values.shape();
        check_dim("heterogeneous vector", k * n, flat.len())?;
        let values = DMatrix::from_fn(k, n, |c, p| flat[c * n + p]);
        Self::new(self.cluster_of_agent.clone(), values, self.ranges.clone())
    }

    /// Box bounds of the flat vector, cluster-major.
    pub fn flat_bounds(&self) -> Vec<(f64, f64)> {
        (0..self.num_clusters())
            .flat_map(|_| self.ranges.iter().map(|r| (r.min, r.max)))
            .collect()
    }

    pub fn value_for_agent(&self, agent: usize, param: usize) -> f64 {
        self.values[(self.cluster_of_agent[agent], param)]
    }

    pub fn validate(&self) -> Result<()> {
        check_dim("heterogeneous columns", self.ranges.len(), self.values.ncols())?;
        let k = self.values.nrows();
        if k == 0 {
            return Err(CalibError::InvalidInput("no clusters".into()));
        }
        if let Some((a, &c)) = self.cluster_of_agent.iter().enumerate().find(|(_, &c)| c >= k) {
            return Err(CalibError::InvalidInput(format!(
                "agent {a} has cluster label {c} but only {k} clusters exist"
            )));
        }
        for (p, range) in self.ranges.iter().enumerate() {
            range.validate()?;
            for c in 0..k {
                let v = self.values[(c, p)];
                if !range.contains(v) {
                    return Err(CalibError::OutOfRange {
                        name: range.name.clone(),
                        index: c,
                        value: v,
                        min: range.min,
                        max: range.max,
                    });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn denormalize_midpoint() {
        let r = ParamRange::new("wealth_income", 0.0, 2.0);
        assert_eq!(r.denormalize(0.5), 1.0);
    }

    #[test]
    fn out_of_range_schedule_is_rejected() {
        let r = vec![ParamRange::new("x", 0.0, 2.0)];
        let err = DynamicSchedule::new(DMatrix::from_element(1, 3, 2.5), r).unwrap_err();
        assert!(matches!(err, CalibError::OutOfRange { .. }));
    }

    #[test]
    fn flat_round_trip() {
        let h = HeterogeneousAssignment::new(
            vec![0, 1, 1],
            DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]),
            vec![ParamRange::new("a", 0.0, 1.0), ParamRange::new("b", 0.0, 1.0)],
        )
        .unwrap();
        assert_eq!(h.flat_values(), vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(h.with_flat_values(&h.flat_values()).unwrap(), h);
        assert_eq!(h.value_for_agent(2, 1), 0.4);
    }

    proptest! {
        #[test]
        fn normalization_round_trip(min in -100.0f64..100.0, width in 1e-3f64..50.0, u in 0.0f64..1.0) {
            let r = ParamRange::new("p", min, min + width);
            let v = r.denormalize(u);
            prop_assert!((r.denormalize(r.normalize(v)) - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }
}
