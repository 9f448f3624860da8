use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::params::DynamicSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Dynamic,
    Heterogeneous,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Dynamic => "dynamic",
            Phase::Heterogeneous => "heterogeneous",
        }
    }
}

/// Dynamic iff `c mod (c_dyn + c_het) < c_dyn`.
pub fn phase_of(c: usize, c_dyn: usize, c_het: usize) -> Phase {
    if c % (c_dyn + c_het) < c_dyn {
        Phase::Dynamic
    } else {
        Phase::Heterogeneous
    }
}

/// One evaluated parameter combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrailRecord {
    pub iter: usize,
    pub phase: Phase,
    /// Candidate index in dynamic phases.
    pub candidate: Option<usize>,
    pub total_mape: f64,
    pub per_stat_mape: Vec<f64>,
    /// Dynamic phases only.
    pub neg_log_lik: Option<f64>,
    pub schedule: DynamicSchedule,
    /// Cluster-major heterogeneous vector.
    pub het_values: Vec<f64>,
}

/// Index of the lowest total MAPE; ties go to the earliest record.
pub fn select_best(trail: &[TrailRecord]) -> Result<usize> {
    select_best_by(trail.iter().map(|r| r.total_mape))
}

pub(crate) fn select_best_by(errors: impl Iterator<Item = f64>) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in errors.enumerate() {
        if best.is_none_or(|(_, b)| e < b) {
            best = Some((i, e));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| CalibError::InvalidInput("no evaluations recorded".into()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `iter,phase,candidate,total_mape,neg_log_lik,best_so_far,mape_<stat>...`.
pub fn write_trail_csv(path: &Path, trail: &[TrailRecord], stat_names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["iter", "phase", "candidate", "total_mape", "neg_log_lik", "best_so_far"]
        .map(String::from)
        .to_vec();
    header.extend(stat_names.iter().map(|s| format!("mape_{s}")));
    w.write_record(&header)?;
    let mut best = f64::INFINITY;
    for r in trail {
        best = best.min(r.total_mape);
        let mut rec = vec![
            r.iter.to_string(),
            r.phase.as_str().to_string(),
            r.candidate.map(|c| c.to_string()).unwrap_or_default(),
            r.total_mape.to_string(),
            opt(r.neg_log_lik),
            best.to_string(),
        ];
        rec.extend(r.per_stat_mape.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a trail CSV as read back: `(iter, phase, total_mape, best_so_far)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrailRow {
    pub iter: usize,
    pub phase: String,
    pub total_mape: f64,
    pub best_so_far: f64,
}

pub fn read_trail_csv(path: &Path) -> Result<Vec<TrailRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |k: usize| rec.get(k).unwrap_or_default();
        let perr = |m: String| CalibError::Parse { line, message: m };
        out.push(TrailRow {
            iter: field(0).parse().map_err(|e| perr(format!("iter: {e}")))?,
            phase: field(1).to_string(),
            total_mape: field(3).parse().map_err(|e| perr(format!("total_mape: {e}")))?,
            best_so_far: field(5).parse().map_err(|e| perr(format!("best_so_far: {e}")))?,
        });
    }
    Ok(out)
}
