use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CalibError, Result};
use crate::metrics::{mape, Mape};
use crate::model::{mean_summary, AbmModel};
use crate::params::{DynamicSchedule, HeterogeneousAssignment};
use crate::rng::{derive_seed, stream};
use crate::trace::{SummaryTrace, ValidationData};

use super::gp::{fit_gp, GaussianProcess, KernelHyperparams};
use super::search::{propose_next, Branch, SearchStrategy, SurrogateView};

/// Records needed before hyperparameters are fitted instead of defaulted.
pub const REFIT_MIN_RECORDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub params: Vec<f64>,
    pub error: f64,
}

/// Evaluated heterogeneous parameter vectors and their errors, with the box
/// they live in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationLog {
    pub bounds: Vec<(f64, f64)>,
    pub records: Vec<EvaluationRecord>,
}

impl EvaluationLog {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() || bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(CalibError::InvalidInput(format!("invalid search box {bounds:?}")));
        }
        Ok(Self { bounds, records: Vec::new() })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, params: Vec<f64>, error: f64) -> Result<()> {
        check_dim("evaluated vector", self.dim(), params.len())?;
        if !error.is_finite() {
            return Err(CalibError::InvalidInput(format!("non-finite error {error}")));
        }
        for (index, (v, (lo, hi))) in params.iter().zip(&self.bounds).enumerate() {
            if !(lo <= v && v <= hi) {
                return Err(CalibError::OutOfRange {
                    name: "heterogeneous parameter".into(),
                    index,
                    value: *v,
                    min: *lo,
                    max: *hi,
                });
            }
        }
        self.records.push(EvaluationRecord { params, error });
        Ok(())
    }

    /// Index of the lowest error; ties go to the earliest record.
    pub fn best_index(&self) -> Option<usize> {
        (0..self.records.len()).reduce(|b, i| if self.records[i].error < self.records[b].error { i } else { b })
    }

    pub fn best_error(&self) -> Option<f64> {
        self.best_index().map(|i| self.records[i].error)
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.bounds).map(|(v, (lo, hi))| (v - lo) / (hi - lo)).collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.bounds)
            .map(|(v, (lo, hi))| (lo + v.clamp(0.0, 1.0) * (hi - lo)).clamp(*lo, *hi))
            .collect()
    }

    pub fn unit_inputs(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| self.to_unit(&r.params)).collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.error).collect()
    }
}

/// Heterogeneous-calibration state carried across iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneousState {
    pub log: EvaluationLog,
    /// Vector evaluated at the next step.
    pub next: Vec<f64>,
    /// Branch that produced `next`; `None` for the initial vector.
    pub next_branch: Option<Branch>,
    /// Heterogeneous iterations completed.
    pub counter: usize,
    pub hyper: Option<KernelHyperparams>,
}

impl HeterogeneousState {
    pub fn new(initial: Vec<f64>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        let log = EvaluationLog::new(bounds)?;
        check_dim("initial heterogeneous vector", log.dim(), initial.len())?;
        Ok(Self {
            log,
            next: initial,
            next_branch: None,
            counter: 0,
            hyper: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneousStepConfig {
    pub replications: usize,
    pub strategy: SearchStrategy,
}

/// One row of the per-iteration heterogeneous log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneousLogRow {
    pub iter: usize,
    /// Branch that proposed the evaluated vector, or `init`.
    pub branch: String,
    pub params: Vec<f64>,
    pub error: f64,
    pub best_so_far: f64,
    /// Log marginal likelihood of the surrogate after this evaluation; NaN if none was built.
    pub gp_loglik: f64,
}

#[derive(Debug, Clone)]
pub struct HeterogeneousStepOutcome {
    pub row: HeterogeneousLogRow,
    pub evaluated: HeterogeneousAssignment,
    pub sim_mean: SummaryTrace,
    pub mape: Mape,
}

/// Builds the surrogate for the current log: fitted hyperparameters once
/// `REFIT_MIN_RECORDS` records exist, defaults before.
pub fn build_surrogate(log: &EvaluationLog, seed: u64) -> Result<Option<GaussianProcess>> {
    if log.is_empty() {
        return Ok(None);
    }
    let x = log.unit_inputs();
    let y = log.errors();
    if log.len() >= REFIT_MIN_RECORDS {
        Ok(Some(fit_gp(&x, &y, seed)?.gp))
    } else {
        GaussianProcess::new(&x, &y, KernelHyperparams::defaults(log.dim(), &y)).map(Some)
    }
}

/// Evaluates `state.next` under the fixed dynamic schedule `dyn_best`,
/// appends it to the log and proposes the following vector.
///
/// `sim_seed` seeds the replications; `seed` drives fitting and proposal.
#[allow(clippy::too_many_arguments)]
pub fn heterogeneous_calibration_step<M: AbmModel + ?Sized>(
    model: &M,
    state: &mut HeterogeneousState,
    dyn_best: &DynamicSchedule,
    template: &HeterogeneousAssignment,
    validation: &ValidationData,
    config: &HeterogeneousStepConfig,
    iter: usize,
    sim_seed: u64,
    seed: u64,
) -> Result<HeterogeneousStepOutcome> {
    config.strategy.validate()?;
    if config.replications == 0 {
        return Err(CalibError::InvalidInput("replications must be >= 1".into()));
    }
    let evaluated = template.with_flat_values(&state.next)?;
    let sim_mean = mean_summary(model, dyn_best, &evaluated, sim_seed, config.replications)?;
    sim_mean.check_compatible(&validation.trace)?;
    let m = mape(&sim_mean.stats, &validation.trace.stats)?;
    state.log.push(state.next.clone(), m.total)?;
    let best = state.log.best_error().expect("log is nonempty");

    let gp = build_surrogate(&state.log, derive_seed(seed, &[stream::HET_GP]))?;
    state.hyper = gp.as_ref().map(|g| g.hyper().clone());
    let incumbent = state.log.to_unit(&state.log.records[state.log.best_index().expect("nonempty")].params);
    let current = state.log.to_unit(&state.next);
    let view = gp.as_ref().map(|gp| SurrogateView {
        gp,
        best,
        incumbent: &incumbent,
        current: &current,
    });
    let proposal = propose_next(
        view.as_ref(),
        &config.strategy,
        state.counter,
        state.log.dim(),
        derive_seed(seed, &[stream::HET_PROPOSE]),
    );
    let row = HeterogeneousLogRow {
        iter,
        branch: state.next_branch.map_or("init", Branch::as_str).to_string(),
        params: state.next.clone(),
        error: m.total,
        best_so_far: best,
        gp_loglik: gp.as_ref().map_or(f64::NAN, |g| g.log_marginal_likelihood()),
    };
    state.next = state.log.from_unit(&proposal.point);
    state.next_branch = Some(proposal.branch);
    state.counter += 1;
    Ok(HeterogeneousStepOutcome {
        row,
        evaluated,
        sim_mean,
        mape: m,
    })
}

/// `iter,branch,param_1..param_D,error,best_so_far,gp_loglik`.
pub fn write_heterogeneous_log_csv(path: &Path, rows: &[HeterogeneousLogRow], dim: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["iter".to_string(), "branch".to_string()];
    header.extend((1..=dim).map(|d| format!("param_{d}")));
    header.extend(["error", "best_so_far", "gp_loglik"].map(String::from));
    w.write_record(&header)?;
    for r in rows {
        check_dim("logged vector", dim, r.params.len())?;
        let mut rec = vec![r.iter.to_string(), r.branch.clone()];
        rec.extend(r.params.iter().map(|v| v.to_string()));
        rec.extend([r.error, r.best_so_far, r.gp_loglik].map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_heterogeneous_log_csv(path: &Path) -> Result<Vec<HeterogeneousLogRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    if width < 5 {
        return Err(CalibError::Parse {
            line: 1,
            message: format!("expected at least 5 columns, found {width}"),
        });
    }
    let dim = width - 5;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        check_dim("heterogeneous log row width", width, rec.len())?;
        let num = |k: usize| {
            rec[k].parse::<f64>().map_err(|e| CalibError::Parse {
                line,
                message: format!("column {}: {e}", k + 1),
            })
        };
        out.push(HeterogeneousLogRow {
            iter: rec[0].parse().map_err(|e: std::num::ParseIntError| CalibError::Parse {
                line,
                message: format!("iter: {e}"),
            })?,
            branch: rec[1].to_string(),
            params: (2..2 + dim).map(num).collect::<Result<_>>()?,
            error: num(2 + dim)?,
            best_so_far: num(3 + dim)?,
            gp_loglik: num(4 + dim)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wealth::{generate_validation, initial_wealth_split, synthetic_assignment, synthetic_schedule, WealthModel, WealthModelConfig};

    fn setup() -> (WealthModel, ValidationData, HeterogeneousAssignment, DynamicSchedule) {
        let model = WealthModel::new(WealthModelConfig::default()).unwrap();
        let truth = synthetic_schedule(50);
        let validation = generate_validation(&model, &truth, &synthetic_assignment(100), 30, 7).unwrap();
        let template = crate::clustering::build_assignment(&initial_wealth_split(100), &WealthModel::heterogeneous_ranges(), None).unwrap();
        (model, validation, template, truth)
    }

    #[test]
    fn log_grows_and_best_is_monotone() {
        let (model, validation, template, truth) = setup();
        let mut state = HeterogeneousState::new(template.flat_values(), template.flat_bounds()).unwrap();
        let config = HeterogeneousStepConfig {
            replications: 3,
            strategy: SearchStrategy {
                c0: 4,
                ..Default::default()
            },
        };
        let mut rows = Vec::new();
        for i in 0..14 {
            let out = heterogeneous_calibration_step(&model, &mut state, &truth, &template, &validation, &config, i, 11, 100 + i as u64).unwrap();
            assert_eq!(state.log.len(), i + 1);
            assert!(state.next.iter().all(|v| (0.0..=1.0).contains(v)));
            if i == 0 {
                assert_eq!(out.row.branch, "init");
                assert!(state.hyper.is_some());
            }
            if i < 4 {
                assert_eq!(state.next_branch, Some(Branch::Random));
            }
            rows.push(out.row);
        }
        assert!(rows.windows(2).all(|w| w[1].best_so_far <= w[0].best_so_far));
        assert!(rows[13].best_so_far < rows[0].error || rows[0].error == rows[13].best_so_far);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("het.csv");
        write_heterogeneous_log_csv(&p, &rows, 2).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("iter,branch,param_1,param_2,error,best_so_far,gp_loglik\n"));
        assert_eq!(text.lines().count(), 15);
        // NaN log-likelihoods before the first fit compare by representation
        assert_eq!(format!("{:?}", read_heterogeneous_log_csv(&p).unwrap()), format!("{rows:?}"));
    }

    #[test]
    fn truth_scores_below_midpoint() {
        let (model, validation, template, truth) = setup();
        let config = HeterogeneousStepConfig {
            replications: 10,
            strategy: SearchStrategy::default(),
        };
        let mut at_truth = HeterogeneousState::new(vec![0.9, 0.1], template.flat_bounds()).unwrap();
        let mut at_mid = HeterogeneousState::new(vec![0.5, 0.5], template.flat_bounds()).unwrap();
        let a = heterogeneous_calibration_step(&model, &mut at_truth, &truth, &template, &validation, &config, 0, 3, 0).unwrap();
        let b = heterogeneous_calibration_step(&model, &mut at_mid, &truth, &template, &validation, &config, 0, 3, 0).unwrap();
        assert!(a.row.error < b.row.error, "{} vs {}", a.row.error, b.row.error);
    }

    #[test]
    fn log_rejects_out_of_box_and_nonfinite() {
        let mut log = EvaluationLog::new(vec![(0.0, 1.0)]).unwrap();
        assert!(log.push(vec![1.5], 0.1).is_err());
        assert!(log.push(vec![0.5], f64::NAN).is_err());
        assert!(log.push(vec![0.5, 0.1], 0.1).is_err());
        log.push(vec![0.2], 0.3).unwrap();
        log.push(vec![0.4], 0.3).unwrap();
        assert_eq!(log.best_index(), Some(0));
        assert!(EvaluationLog::new(vec![(1.0, 1.0)]).is_err());
    }
}
