//! Named experiments on the wealth model: each preset is one or more
//! methods, each method a framework configuration (or a plain evaluation of
//! the synthetic parameters) repeated over independent trials.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::framework::{
    evaluate_parameters, run_framework, write_best_params_csv, write_trail_csv, FrameworkConfig, InitMode, MetricsReport,
};
use crate::io::write_validation;
use crate::regime::{write_dynamic_log_csv, GenerationRule};
use crate::rng::{derive_seed, stream};
use crate::stats::{mean, sample_sd};
use crate::surrogate::{write_heterogeneous_log_csv, SearchStrategy};
use crate::trace::ValidationData;
use crate::wealth::{generate_validation, synthetic_assignment, synthetic_schedule, WealthModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetName {
    SyntheticBaseline,
    RandomSearch,
    DynamicByTime,
    DynamicByRegime,
    DynamicModeSelection,
    HeterogeneousBo,
    FrameworkA,
    FrameworkB,
}

impl PresetName {
    pub const ALL: [PresetName; 8] = [
        PresetName::SyntheticBaseline,
        PresetName::RandomSearch,
        PresetName::DynamicByTime,
        PresetName::DynamicByRegime,
        PresetName::DynamicModeSelection,
        PresetName::HeterogeneousBo,
        PresetName::FrameworkA,
        PresetName::FrameworkB,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::SyntheticBaseline => "synthetic-baseline",
            PresetName::RandomSearch => "random-search",
            PresetName::DynamicByTime => "dynamic-by-time",
            PresetName::DynamicByRegime => "dynamic-by-regime",
            PresetName::DynamicModeSelection => "dynamic-mode-selection",
            PresetName::HeterogeneousBo => "heterogeneous-bo",
            PresetName::FrameworkA => "framework-a",
            PresetName::FrameworkB => "framework-b",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| CalibError::InvalidInput(format!("unknown preset '{s}'")))
    }
}

/// What one method does per trial.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodKind {
    /// Evaluate the synthetic parameters without calibrating.
    Evaluate,
    Calibrate(Box<FrameworkConfig>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Method {
    pub name: String,
    /// Method this one is tested against, if any.
    pub baseline: Option<String>,
    /// Replications per evaluation.
    pub replications: usize,
    pub kind: MethodKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPreset {
    pub name: PresetName,
    pub methods: Vec<Method>,
    /// Base configuration: model, validation and shared settings.
    pub base: FrameworkConfig,
}

pub const DEFAULT_TRIALS: usize = 30;

/// Random search over heterogeneous parameters: the random branch always.
pub fn random_strategy() -> SearchStrategy {
    SearchStrategy {
        c0: usize::MAX,
        ..SearchStrategy::default()
    }
}

fn dynamic_only(base: &FrameworkConfig, rule: GenerationRule) -> FrameworkConfig {
    let mut c = base.clone();
    c.c_cal = 100;
    c.c_dyn = 1;
    c.c_het = 0;
    c.candidates = 3;
    c.rule = rule;
    c.init.dynamic = InitMode::Random;
    c.init.heterogeneous = InitMode::Reference;
    c
}

fn heterogeneous_only(base: &FrameworkConfig, strategy: SearchStrategy) -> FrameworkConfig {
    let mut c = base.clone();
    c.c_cal = 100;
    c.c_dyn = 0;
    c.c_het = 1;
    c.candidates = 1;
    c.search = strategy;
    c.init.dynamic = InitMode::Reference;
    c.init.heterogeneous = InitMode::Random;
    c
}

fn alternating(base: &FrameworkConfig, c_dyn: usize, c_het: usize, rule: GenerationRule, strategy: SearchStrategy) -> FrameworkConfig {
    let mut c = base.clone();
    c.c_cal = 200;
    c.c_dyn = c_dyn;
    c.c_het = c_het;
    c.candidates = 3;
    c.rule = rule;
    c.search = strategy;
    c.init.dynamic = InitMode::Random;
    c.init.heterogeneous = InitMode::Random;
    c
}

fn method(name: &str, baseline: Option<&str>, cfg: FrameworkConfig) -> Method {
    Method {
        name: name.to_string(),
        baseline: baseline.map(String::from),
        replications: cfg.replications,
        kind: MethodKind::Calibrate(Box::new(cfg)),
    }
}

/// Builds a preset on top of `base` (model, replications, K_dyn, validation).
pub fn preset_with_base(name: PresetName, base: FrameworkConfig) -> ExperimentPreset {
    let b = &base;
    let methods = match name {
        PresetName::SyntheticBaseline => vec![Method {
            name: "synthetic-baseline".into(),
            baseline: None,
            replications: b.replications,
            kind: MethodKind::Evaluate,
        }],
        PresetName::RandomSearch => vec![
            method("rs-dynamic", None, dynamic_only(b, GenerationRule::Random)),
            method("rs-heterogeneous", None, heterogeneous_only(b, random_strategy())),
            method("rs-all", None, alternating(b, 20, 30, GenerationRule::Random, random_strategy())),
        ],
        PresetName::DynamicByTime => vec![method("dynamic-by-time", Some("rs-dynamic"), dynamic_only(b, GenerationRule::ByTime))],
        PresetName::DynamicByRegime => vec![method("dynamic-by-regime", Some("rs-dynamic"), dynamic_only(b, GenerationRule::ByRegime))],
        PresetName::DynamicModeSelection => {
            vec![method("dynamic-mode-selection", Some("rs-dynamic"), dynamic_only(b, GenerationRule::ModeSelection))]
        }
        PresetName::HeterogeneousBo => vec![method("heterogeneous-bo", Some("rs-heterogeneous"), heterogeneous_only(b, b.search))],
        PresetName::FrameworkA => vec![method("framework-a", Some("rs-all"), alternating(b, 2, 3, GenerationRule::ModeSelection, b.search))],
        PresetName::FrameworkB => vec![method("framework-b", Some("rs-all"), alternating(b, 20, 30, GenerationRule::ModeSelection, b.search))],
    };
    ExperimentPreset { name, methods, base }
}

pub fn preset(name: PresetName) -> ExperimentPreset {
    preset_with_base(name, FrameworkConfig::default())
}

/// Outcome of one trial of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub method: String,
    pub trial: usize,
    pub seed: u64,
    pub report: MetricsReport,
    /// Best-so-far total MAPE after each iteration; empty for evaluations.
    pub best_series: Vec<f64>,
}

/// Mean and sample sd of one metric across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct PresetOutcome {
    pub validation: ValidationData,
    pub trials: Vec<TrialResult>,
    pub aggregates: Vec<Aggregate>,
}

impl PresetOutcome {
    pub fn metric(&self, method: &str, f: impl Fn(&MetricsReport) -> Option<f64>) -> Vec<f64> {
        self.trials.iter().filter(|t| t.method == method).filter_map(|t| f(&t.report)).collect()
    }
}

pub fn trial_seed(master: u64, trial: usize) -> u64 {
    derive_seed(master, &[stream::TRIAL, trial as u64])
}

/// Validation data from the synthetic parameters, seeded from `master`.
pub fn preset_validation(base: &FrameworkConfig, master: u64) -> Result<ValidationData> {
    let model = WealthModel::new(base.model.clone())?;
    generate_validation(
        &model,
        &synthetic_schedule(base.model.horizon),
        &synthetic_assignment(base.model.num_agents),
        base.validation.replications,
        derive_seed(master, &[stream::VALIDATION]),
    )
}

fn best_series(trail: &[crate::framework::TrailRecord], c_cal: usize) -> Vec<f64> {
    let mut series = vec![f64::INFINITY; c_cal];
    for r in trail {
        series[r.iter] = series[r.iter].min(r.total_mape);
    }
    for c in 1..c_cal {
        series[c] = series[c].min(series[c - 1]);
    }
    series
}

/// Runs one trial of `method`, writing its files under `dir` when given.
pub fn run_trial(method: &Method, validation: &ValidationData, base: &FrameworkConfig, trial: usize, master: u64, dir: Option<&Path>) -> Result<TrialResult> {
    let seed = trial_seed(master, trial);
    let model = WealthModel::new(base.model.clone())?;
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
    }
    let (report, series) = match &method.kind {
        MethodKind::Evaluate => {
            let report = evaluate_parameters(
                &model,
                base,
                &synthetic_schedule(base.model.horizon),
                &synthetic_assignment(base.model.num_agents),
                validation,
                method.replications,
                seed,
            )?;
            (report, Vec::new())
        }
        MethodKind::Calibrate(cfg) => {
            let cfg = FrameworkConfig { seed, ..(**cfg).clone() };
            let out = run_framework(&model, &cfg, validation)?;
            if let Some(d) = dir {
                write_trail_csv(&d.join("trail.csv"), &out.state.trail, &validation.trace.names)?;
                write_best_params_csv(&d.join("best_params.csv"), &out.best_schedule, &out.best_assignment)?;
                if !out.state.dynamic_log.is_empty() {
                    write_dynamic_log_csv(&d.join("dynamic_log.csv"), &out.state.dynamic_log)?;
                }
                if !out.state.heterogeneous_log.is_empty() {
                    write_heterogeneous_log_csv(&d.join("heterogeneous_log.csv"), &out.state.heterogeneous_log, out.state.het.log.dim())?;
                }
            }
            let series = best_series(&out.state.trail, cfg.c_cal);
            (out.report, series)
        }
    };
    if let Some(d) = dir {
        report.write_csv(&d.join("report.csv"))?;
    }
    Ok(TrialResult {
        method: method.name.clone(),
        trial,
        seed,
        report,
        best_series: series,
    })
}

fn metric_columns(report: &MetricsReport) -> Vec<(String, Option<f64>)> {
    let mut cols: Vec<(String, Option<f64>)> = report
        .stat_names
        .iter()
        .zip(&report.per_stat_mape)
        .map(|(n, v)| (format!("mape_{n}"), Some(*v)))
        .collect();
    cols.push(("total_mape".into(), Some(report.total_mape)));
    cols.push(("dynamic_mae".into(), report.dynamic_mae));
    cols.push(("heterogeneous_euclidean".into(), report.heterogeneous_euclidean));
    cols
}

pub fn aggregate(trials: &[TrialResult]) -> Vec<Aggregate> {
    let mut methods: Vec<&str> = Vec::new();
    for t in trials {
        if !methods.contains(&t.method.as_str()) {
            methods.push(&t.method);
        }
    }
    let mut out = Vec::new();
    for m in methods {
        let rows: Vec<&TrialResult> = trials.iter().filter(|t| t.method == m).collect();
        for (k, (name, _)) in metric_columns(&rows[0].report).into_iter().enumerate() {
            let vals: Vec<f64> = rows.iter().filter_map(|t| metric_columns(&t.report)[k].1).collect();
            if vals.is_empty() {
                continue;
            }
            out.push(Aggregate {
                method: m.to_string(),
                metric: name,
                mean: mean(&vals),
                sd: sample_sd(&vals),
                n: vals.len(),
            });
        }
    }
    out
}

/// `method,trial,seed,<metrics>`.
pub fn write_trials_csv(path: &Path, trials: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let Some(first) = trials.first() else {
        return Err(CalibError::InvalidInput("no trials to write".into()));
    };
    let mut header = vec!["method".to_string(), "trial".to_string(), "seed".to_string()];
    header.extend(metric_columns(&first.report).into_iter().map(|c| c.0));
    w.write_record(&header)?;
    for t in trials {
        let mut rec = vec![t.method.clone(), t.trial.to_string(), t.seed.to_string()];
        rec.extend(metric_columns(&t.report).into_iter().map(|c| c.1.map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `trials.csv` as `(method, column -> value)` rows; empty cells are skipped.
pub fn read_trials_csv(path: &Path) -> Result<Vec<(String, Vec<(String, f64)>)>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let mut vals = Vec::new();
        for (k, cell) in rec.iter().enumerate().skip(3) {
            if cell.is_empty() {
                continue;
            }
            let v = cell.parse::<f64>().map_err(|e| CalibError::Parse {
                line: i + 2,
                message: format!("{}: {e}", header[k]),
            })?;
            vals.push((header[k].clone(), v));
        }
        out.push((rec.get(0).unwrap_or_default().to_string(), vals));
    }
    Ok(out)
}

/// `method,metric,mean,sd,n`.
pub fn write_aggregate_csv(path: &Path, aggs: &[Aggregate]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["method", "metric", "mean", "sd", "n"])?;
    for a in aggs {
        w.serialize(a)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<Aggregate>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| CalibError::Parse {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

/// `iter,mean_best_so_far`: best-so-far total MAPE averaged over trials.
pub fn write_series_csv(path: &Path, series: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "mean_best_so_far"])?;
    for (i, v) in series.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series_csv(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let v = rec.get(1).unwrap_or_default();
        out.push(v.parse().map_err(|e| CalibError::Parse {
            line: i + 2,
            message: format!("'{v}': {e}"),
        })?);
    }
    Ok(out)
}

/// Runs every method of `preset` for `trials` trials. With `out`, writes
/// `validation.csv` and per method `<method>/trial_<k>/...`,
/// `<method>/trials.csv`, `<method>/aggregate.csv`, `<method>/series.csv`.
/// Each trial directory appears only once complete.
pub fn run_preset(preset: &ExperimentPreset, trials: usize, master: u64, out: Option<&Path>) -> Result<PresetOutcome> {
    if trials == 0 {
        return Err(CalibError::InvalidInput("trials must be >= 1".into()));
    }
    let validation = preset_validation(&preset.base, master)?;
    if let Some(o) = out {
        fs::create_dir_all(o)?;
        write_validation(&o.join("validation.csv"), &validation)?;
    }
    let mut all = Vec::new();
    for m in &preset.methods {
        let mut rows = Vec::with_capacity(trials);
        for k in 0..trials {
            let Some(o) = out else {
                rows.push(run_trial(m, &validation, &preset.base, k, master, None)?);
                continue;
            };
            let dir = o.join(&m.name).join(format!("trial_{k}"));
            let partial = o.join(&m.name).join(format!("trial_{k}.partial"));
            if partial.exists() {
                fs::remove_dir_all(&partial)?;
            }
            rows.push(run_trial(m, &validation, &preset.base, k, master, Some(&partial))?);
            if dir.exists() {
                fs::remove_dir_all(&dir)?;
            }
            fs::rename(&partial, &dir)?;
        }
        if let Some(o) = out {
            let mdir = o.join(&m.name);
            write_trials_csv(&mdir.join("trials.csv"), &rows)?;
            write_aggregate_csv(&mdir.join("aggregate.csv"), &aggregate(&rows))?;
            if !rows[0].best_series.is_empty() {
                let len = rows[0].best_series.len();
                let avg: Vec<f64> = (0..len).map(|c| mean(&rows.iter().map(|r| r.best_series[c]).collect::<Vec<_>>())).collect();
                write_series_csv(&mdir.join("series.csv"), &avg)?;
            }
            if let Some(b) = &m.baseline {
                fs::write(mdir.join("baseline.txt"), b)?;
            }
        }
        all.extend(rows);
    }
    let aggregates = aggregate(&all);
    Ok(PresetOutcome {
        validation,
        trials: all,
        aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wealth::WealthModelConfig;

    fn tiny_base() -> FrameworkConfig {
        FrameworkConfig {
            model: WealthModelConfig {
                horizon: 20,
                ..Default::default()
            },
            replications: 2,
            validation: crate::framework::ValidationConfig {
                replications: 5,
                seed: 0,
            },
            ..Default::default()
        }
    }

    #[test]
    fn names_round_trip_and_shapes() {
        for p in PresetName::ALL {
            assert_eq!(p.as_str().parse::<PresetName>().unwrap(), p);
            let pr = preset(p);
            assert!(!pr.methods.is_empty());
            for m in &pr.methods {
                if let MethodKind::Calibrate(c) = &m.kind {
                    c.validate().unwrap();
                }
            }
        }
        assert_eq!(preset(PresetName::RandomSearch).methods.len(), 3);
        assert!("bogus".parse::<PresetName>().is_err());
        match &preset(PresetName::FrameworkA).methods[0].kind {
            MethodKind::Calibrate(c) => assert_eq!((c.c_cal, c.c_dyn, c.c_het), (200, 2, 3)),
            _ => panic!(),
        }
    }

    #[test]
    fn baseline_preset_is_deterministic_and_writes_files() {
        let pr = preset_with_base(PresetName::SyntheticBaseline, tiny_base());
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let a = run_preset(&pr, 3, 7, Some(d1.path())).unwrap();
        run_preset(&pr, 3, 7, Some(d2.path())).unwrap();
        assert_eq!(a.trials.len(), 3);
        assert!(a.trials.iter().all(|t| t.report.dynamic_mae == Some(0.0)));
        for f in ["validation.csv", "synthetic-baseline/trials.csv", "synthetic-baseline/aggregate.csv", "synthetic-baseline/trial_0/report.csv"] {
            assert_eq!(fs::read(d1.path().join(f)).unwrap(), fs::read(d2.path().join(f)).unwrap(), "{f}");
        }
        let rows = read_trials_csv(&d1.path().join("synthetic-baseline/trials.csv")).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(read_aggregate_csv(&d1.path().join("synthetic-baseline/aggregate.csv")).unwrap(), aggregate(&a.trials));
    }

    #[test]
    fn calibrating_preset_series_is_monotone() {
        let mut base = tiny_base();
        base.replications = 1;
        let mut pr = preset_with_base(PresetName::FrameworkA, base);
        if let MethodKind::Calibrate(c) = &mut pr.methods[0].kind {
            c.c_cal = 8;
        }
        let out = run_preset(&pr, 1, 1, None).unwrap();
        let s = &out.trials[0].best_series;
        assert_eq!(s.len(), 8);
        assert!(s.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*s.last().unwrap(), out.trials[0].report.total_mape);
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("series.csv");
        write_series_csv(&p, s).unwrap();
        assert_eq!(&read_series_csv(&p).unwrap(), s);
    }
}
