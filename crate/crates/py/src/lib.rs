//! Python bindings: simulation, validation synthesis, calibration and presets.
//!
//! Every function taking `config` accepts the same JSON document as the
//! command-line tool; omitted keys take their defaults.

use std::path::PathBuf;

use abm_calib::framework::{run_framework, FrameworkConfig, MetricsReport};
use abm_calib::presets::{preset_with_base, run_preset as run_preset_core, PresetName};
use abm_calib::wealth::{generate_validation as generate_core, initial_wealth_split, synthetic_assignment, synthetic_schedule, WealthModel};
use abm_calib::{AbmModel, CalibError, DynamicSchedule, HeterogeneousAssignment, SummaryTrace};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: CalibError) -> PyErr {
    match e {
        CalibError::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn load_config(config: Option<&str>) -> PyResult<FrameworkConfig> {
    match config {
        Some(text) => FrameworkConfig::from_json(text).map_err(to_py),
        None => Ok(FrameworkConfig::default()),
    }
}

/// Summary statistics, one row per statistic.
#[pyclass(get_all, frozen)]
struct Trace {
    names: Vec<String>,
    stats: Vec<Vec<f64>>,
}

impl From<&SummaryTrace> for Trace {
    fn from(t: &SummaryTrace) -> Self {
        Trace {
            names: t.names.clone(),
            stats: (0..t.num_stats()).map(|s| t.stats.row(s).iter().copied().collect()).collect(),
        }
    }
}

#[pymethods]
impl Trace {
    fn __repr__(&self) -> String {
        format!("Trace({} stats x {} steps)", self.names.len(), self.stats.first().map_or(0, Vec::len))
    }
}

/// Metrics of a calibrated (or evaluated) parameter combination.
#[pyclass(get_all, frozen)]
struct Report {
    method: String,
    stat_names: Vec<String>,
    per_stat_mape: Vec<f64>,
    total_mape: f64,
    dynamic_mae: Option<f64>,
    heterogeneous_euclidean: Option<f64>,
}

impl Report {
    fn new(method: &str, r: &MetricsReport) -> Self {
        Report {
            method: method.to_string(),
            stat_names: r.stat_names.clone(),
            per_stat_mape: r.per_stat_mape.clone(),
            total_mape: r.total_mape,
            dynamic_mae: r.dynamic_mae,
            heterogeneous_euclidean: r.heterogeneous_euclidean,
        }
    }
}

#[pymethods]
impl Report {
    fn __repr__(&self) -> String {
        format!("Report(method={:?}, total_mape={:.6})", self.method, self.total_mape)
    }
}

/// One simulation run. `income` has one value per step; `consumption` one
/// value per cluster; agents default to the initial-wealth halves.
#[pyfunction]
#[pyo3(signature = (income, consumption, seed, cluster_of_agent=None, config=None))]
fn simulate(
    py: Python<'_>,
    income: Vec<f64>,
    consumption: Vec<f64>,
    seed: u64,
    cluster_of_agent: Option<Vec<usize>>,
    config: Option<&str>,
) -> PyResult<Trace> {
    let cfg = load_config(config)?;
    let model = WealthModel::new(cfg.model.clone()).map_err(to_py)?;
    let schedule = DynamicSchedule::new(DMatrix::from_row_slice(1, income.len(), &income), WealthModel::dynamic_ranges()).map_err(to_py)?;
    let labels = cluster_of_agent.unwrap_or_else(|| initial_wealth_split(cfg.model.num_agents));
    let het = HeterogeneousAssignment::new(labels, DMatrix::from_column_slice(consumption.len(), 1, &consumption), WealthModel::heterogeneous_ranges())
        .map_err(to_py)?;
    let run = py.detach(|| model.run(&schedule, &het, seed)).map_err(to_py)?;
    Ok(Trace::from(&run.summary))
}

/// Mean trace over `replications` runs with the synthetic parameters.
#[pyfunction]
#[pyo3(signature = (replications=300, seed=2021, config=None))]
fn generate_validation(py: Python<'_>, replications: usize, seed: u64, config: Option<&str>) -> PyResult<Trace> {
    let cfg = load_config(config)?;
    let model = WealthModel::new(cfg.model.clone()).map_err(to_py)?;
    let data = py
        .detach(|| {
            generate_core(
                &model,
                &synthetic_schedule(cfg.model.horizon),
                &synthetic_assignment(cfg.model.num_agents),
                replications,
                seed,
            )
        })
        .map_err(to_py)?;
    Ok(Trace::from(&data.trace))
}

/// Runs one calibration against validation synthesized from the configuration.
#[pyfunction]
#[pyo3(signature = (config=None, seed=None))]
fn calibrate(py: Python<'_>, config: Option<&str>, seed: Option<u64>) -> PyResult<Report> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let model = WealthModel::new(cfg.model.clone()).map_err(to_py)?;
    let out = py
        .detach(|| {
            let val = generate_core(
                &model,
                &synthetic_schedule(cfg.model.horizon),
                &synthetic_assignment(cfg.model.num_agents),
                cfg.validation.replications,
                cfg.validation.seed,
            )?;
            run_framework(&model, &cfg, &val)
        })
        .map_err(to_py)?;
    Ok(Report::new("calibrate", &out.report))
}

/// Runs a named preset; returns one report per method and trial.
#[pyfunction]
#[pyo3(signature = (name, trials=1, seed=0, out=None, config=None))]
fn run_preset(py: Python<'_>, name: &str, trials: usize, seed: u64, out: Option<PathBuf>, config: Option<&str>) -> PyResult<Vec<Report>> {
    let name: PresetName = name.parse().map_err(to_py)?;
    let preset = preset_with_base(name, load_config(config)?);
    let res = py.detach(|| run_preset_core(&preset, trials, seed, out.as_deref())).map_err(to_py)?;
    Ok(res.trials.iter().map(|t| Report::new(&t.method, &t.report)).collect())
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    PresetName::ALL.iter().map(|p| p.as_str()).collect()
}

/// Per-statistic and total mean absolute percentage error.
#[pyfunction]
fn mape(sim: Vec<Vec<f64>>, val: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, f64)> {
    let to_matrix = |rows: &[Vec<f64>]| -> PyResult<DMatrix<f64>> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(PyValueError::new_err("rows must have equal length"));
        }
        Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
    };
    let m = abm_calib::metrics::mape(&to_matrix(&sim)?, &to_matrix(&val)?).map_err(to_py)?;
    Ok((m.per_stat, m.total))
}

#[pyfunction]
fn gini(wealths: Vec<f64>) -> f64 {
    abm_calib::wealth::gini(&wealths)
}

/// `(t, df, p)` of the one-tailed Welch test that `candidate` has the lower mean.
#[pyfunction]
fn welch_one_tailed(candidate: Vec<f64>, baseline: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    if candidate.len() < 2 || baseline.len() < 2 {
        return Err(PyValueError::new_err("each sample needs at least two values"));
    }
    let w = abm_calib::stats::welch_one_tailed(&candidate, &baseline);
    Ok((w.t, w.df, w.p_value))
}

#[pymodule]
fn abmcal(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Trace>()?;
    m.add_class::<Report>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(generate_validation, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(mape, m)?)?;
    m.add_function(wrap_pyfunction!(gini, m)?)?;
    m.add_function(wrap_pyfunction!(welch_one_tailed, m)?)?;
    Ok(())
}
