use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{build_assignment, cluster_agents, ClusteringMode};
use crate::error::{check_dim, CalibError, Result};
use crate::metrics::{dynamic_mae, heterogeneous_euclidean, mape};
use crate::model::{mean_summary, AbmModel};
use crate::params::{DynamicSchedule, HeterogeneousAssignment, ParamRange};
use crate::regime::{dynamic_calibration_step, CandidateSet, DynamicLogRow, DynamicStepConfig};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::surrogate::{heterogeneous_calibration_step, HeterogeneousLogRow, HeterogeneousState, HeterogeneousStepConfig};
use crate::trace::{AgentTrace, ValidationData};
use crate::wealth::{synthetic_assignment, synthetic_schedule};

use super::config::{FrameworkConfig, InitMode, ReferenceMode};
use super::trail::{phase_of, select_best, Phase, TrailRecord};

/// Groups agents into clusters from agent trajectories. Invoked once per run.
pub trait Clusterer {
    fn cluster(&mut self, mode: &ClusteringMode, traces: Option<&AgentTrace>, config: &FrameworkConfig, seed: u64) -> Result<Vec<usize>>;
}

/// VAE plus GMM/DPMM clustering, or the given assignment.
#[derive(Debug, Default, Clone, Copy)]
pub struct DefaultClusterer;

impl Clusterer for DefaultClusterer {
    fn cluster(&mut self, mode: &ClusteringMode, traces: Option<&AgentTrace>, config: &FrameworkConfig, seed: u64) -> Result<Vec<usize>> {
        if let ClusteringMode::Given { cluster_of_agent } = mode {
            return Ok(cluster_of_agent.clone());
        }
        let traces = traces.ok_or_else(|| CalibError::InvalidInput("clustering needs agent traces".into()))?;
        Ok(cluster_agents(traces, mode, &config.clustering.vae(), config.clustering.sweeps(), seed)?.cluster_of_agent)
    }
}

/// Everything needed to continue a run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationState {
    /// Next iteration to execute.
    pub iteration: usize,
    pub candidates: CandidateSet,
    pub het: HeterogeneousState,
    /// Cluster labels and ranges; values are the initial assignment.
    pub template: HeterogeneousAssignment,
    /// Schedule handed to heterogeneous blocks.
    pub dyn_best: DynamicSchedule,
    /// Lowest MAPE of the dynamic block in progress.
    pub block_best_mape: Option<f64>,
    /// Dynamic iterations completed.
    pub dynamic_steps: usize,
    pub trail: Vec<TrailRecord>,
    pub dynamic_log: Vec<DynamicLogRow>,
    pub heterogeneous_log: Vec<HeterogeneousLogRow>,
}

impl CalibrationState {
    /// Heterogeneous vector used by dynamic blocks: the best evaluated one,
    /// or the initial vector before any heterogeneous evaluation.
    pub fn current_het_vector(&self) -> Vec<f64> {
        match self.het.log.best_index() {
            Some(i) => self.het.log.records[i].params.clone(),
            None => self.het.next.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Final metrics for a parameter combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub stat_names: Vec<String>,
    pub per_stat_mape: Vec<f64>,
    pub total_mape: f64,
    pub dynamic_mae: Option<f64>,
    pub heterogeneous_euclidean: Option<f64>,
}

impl MetricsReport {
    /// `metric,value` rows; absent metrics are written empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["metric", "value"])?;
        for (name, v) in self.stat_names.iter().zip(&self.per_stat_mape) {
            w.write_record([format!("mape_{name}"), v.to_string()])?;
        }
        w.write_record(["total_mape".to_string(), self.total_mape.to_string()])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record(["dynamic_mae".to_string(), opt(self.dynamic_mae)])?;
        w.write_record(["heterogeneous_euclidean".to_string(), opt(self.heterogeneous_euclidean)])?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut out = MetricsReport {
            stat_names: Vec::new(),
            per_stat_mape: Vec::new(),
            total_mape: f64::NAN,
            dynamic_mae: None,
            heterogeneous_euclidean: None,
        };
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let key = rec.get(0).unwrap_or_default();
            let raw = rec.get(1).unwrap_or_default();
            let value = if raw.is_empty() {
                None
            } else {
                Some(raw.parse::<f64>().map_err(|e| CalibError::Parse {
                    line: i + 2,
                    message: format!("{key}: {e}"),
                })?)
            };
            match (key, key.strip_prefix("mape_")) {
                (_, Some(stat)) => {
                    out.stat_names.push(stat.to_string());
                    out.per_stat_mape.push(value.unwrap_or(f64::NAN));
                }
                ("total_mape", _) => out.total_mape = value.unwrap_or(f64::NAN),
                ("dynamic_mae", _) => out.dynamic_mae = value,
                ("heterogeneous_euclidean", _) => out.heterogeneous_euclidean = value,
                _ => {
                    return Err(CalibError::Parse {
                        line: i + 2,
                        message: format!("unknown metric '{key}'"),
                    })
                }
            }
        }
        Ok(out)
    }
}

/// Result of a framework run.
#[derive(Debug, Clone)]
pub struct FrameworkOutcome {
    pub state: CalibrationState,
    pub best_index: usize,
    pub best_schedule: DynamicSchedule,
    pub best_assignment: HeterogeneousAssignment,
    pub report: MetricsReport,
    pub clustering_calls: usize,
}

/// Synthetic schedule and assignment used as the metric reference.
pub fn reference_parameters(config: &FrameworkConfig) -> Option<(DynamicSchedule, HeterogeneousAssignment)> {
    match config.reference {
        ReferenceMode::Synthetic => Some((
            synthetic_schedule(config.model.horizon),
            synthetic_assignment(config.model.num_agents),
        )),
        ReferenceMode::None => None,
    }
}

/// Mean-over-`replications` MAPE of a combination plus parameter errors
/// against the configured reference.
pub fn evaluate_parameters<M: AbmModel + ?Sized>(
    model: &M,
    config: &FrameworkConfig,
    schedule: &DynamicSchedule,
    het: &HeterogeneousAssignment,
    validation: &ValidationData,
    replications: usize,
    seed: u64,
) -> Result<MetricsReport> {
    let sim = mean_summary(model, schedule, het, seed, replications)?;
    sim.check_compatible(&validation.trace)?;
    let m = mape(&sim.stats, &validation.trace.stats)?;
    let (dynamic_mae, heterogeneous_euclidean) = parameter_errors(config, schedule, het)?;
    Ok(MetricsReport {
        stat_names: validation.trace.names.clone(),
        per_stat_mape: m.per_stat,
        total_mape: m.total,
        dynamic_mae,
        heterogeneous_euclidean,
    })
}

/// Dynamic MAE and heterogeneous Euclidean error against the configured
/// reference; the latter is `None` unless shapes and labels match.
pub fn parameter_errors(config: &FrameworkConfig, schedule: &DynamicSchedule, het: &HeterogeneousAssignment) -> Result<(Option<f64>, Option<f64>)> {
    let reference = reference_parameters(config);
    let dyn_err = match &reference {
        Some((s, _)) => Some(dynamic_mae(schedule, s)?),
        None => None,
    };
    let het_err = reference
        .as_ref()
        .filter(|(_, h)| h.values.shape() == het.values.shape() && h.cluster_of_agent == het.cluster_of_agent)
        .map(|(_, h)| heterogeneous_euclidean(&het.values, &h.values))
        .transpose()?;
    Ok((dyn_err, het_err))
}

fn initial_schedule<R: Rng>(mode: &InitMode, ranges: &[ParamRange], horizon: usize, rng: &mut R) -> Result<DynamicSchedule> {
    let values = match mode {
        InitMode::Random => DMatrix::from_fn(ranges.len(), horizon, |n, _| ranges[n].denormalize(rng.random())),
        InitMode::Midpoint => DMatrix::from_fn(ranges.len(), horizon, |n, _| ranges[n].midpoint()),
        InitMode::Reference => return Ok(synthetic_schedule(horizon)),
        InitMode::Constant(v) => DMatrix::from_fn(ranges.len(), horizon, |n, _| v[n]),
    };
    DynamicSchedule::new(values, ranges.to_vec())
}

fn initial_assignment<R: Rng>(mode: &InitMode, labels: &[usize], ranges: &[ParamRange], rng: &mut R) -> Result<HeterogeneousAssignment> {
    let base = build_assignment(labels, ranges, None)?;
    let (k, n) = base.values.shape();
    let values = match mode {
        InitMode::Random => DMatrix::from_fn(k, n, |_, p| ranges[p].denormalize(rng.random())),
        InitMode::Midpoint => base.values.clone(),
        InitMode::Reference => {
            let truth = synthetic_assignment(labels.len());
            check_dim("reference cluster count", truth.num_clusters(), k)?;
            truth.values
        }
        InitMode::Constant(v) => DMatrix::from_fn(k, n, |_, p| v[p]),
    };
    HeterogeneousAssignment::new(labels.to_vec(), values, ranges.to_vec())
}

/// Runs clustering once and draws the initial parameters.
pub fn initialize<M: AbmModel + ?Sized>(model: &M, config: &FrameworkConfig, clusterer: &mut dyn Clusterer) -> Result<CalibrationState> {
    config.validate()?;
    let horizon = model.horizon();
    let ranges = &config.ranges;
    let mut rng = rng_from_seed(derive_seed(config.seed, &[stream::INIT]));
    let candidates = (0..config.candidates)
        .map(|_| initial_schedule(&config.init.dynamic, &ranges.dynamic, horizon, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mode = config.clustering.mode(model.num_agents());
    let traces = match mode {
        ClusteringMode::Given { .. } => None,
        _ => {
            // trajectories under the initial parameters
            let mid = build_assignment(&vec![0; model.num_agents()], &ranges.heterogeneous, None)?;
            Some(model.run(&candidates[0], &mid, derive_seed(config.seed, &[stream::CLUSTER, 1]))?.agents)
        }
    };
    let labels = clusterer.cluster(&mode, traces.as_ref(), config, derive_seed(config.seed, &[stream::CLUSTER]))?;
    check_dim("cluster labels", model.num_agents(), labels.len())?;
    let template = initial_assignment(&config.init.heterogeneous, &labels, &ranges.heterogeneous, &mut rng)?;
    let het = HeterogeneousState::new(template.flat_values(), template.flat_bounds())?;
    Ok(CalibrationState {
        iteration: 0,
        dyn_best: candidates[0].clone(),
        candidates: CandidateSet::new(candidates, 0)?,
        het,
        template,
        block_best_mape: None,
        dynamic_steps: 0,
        trail: Vec::new(),
        dynamic_log: Vec::new(),
        heterogeneous_log: Vec::new(),
    })
}

/// Executes iteration `state.iteration`. On error `state` is unchanged.
pub fn step<M: AbmModel + ?Sized>(model: &M, config: &FrameworkConfig, validation: &ValidationData, state: &mut CalibrationState) -> Result<Phase> {
    let c = state.iteration;
    let phase = phase_of(c, config.c_dyn, config.c_het);
    match phase {
        Phase::Dynamic => {
            let het_vec = state.current_het_vector();
            let het = state.template.with_flat_values(&het_vec)?;
            let cfg = DynamicStepConfig {
                replications: config.replications,
                k_dyn: config.k_dyn,
                rule: config.rule,
            };
            let out = dynamic_calibration_step(
                model,
                &state.candidates,
                &het,
                validation,
                &cfg,
                state.dynamic_steps,
                derive_seed(config.seed, &[stream::DYNAMIC_SIM, c as u64]),
            )?;
            let block_start = c == 0 || phase_of(c - 1, config.c_dyn, config.c_het) != Phase::Dynamic;
            if block_start {
                state.block_best_mape = None;
            }
            for (i, (cand, sim)) in state.candidates.candidates.iter().zip(&out.sim_means).enumerate() {
                let m = mape(&sim.stats, &validation.trace.stats)?;
                if state.block_best_mape.is_none_or(|b| m.total < b) {
                    state.block_best_mape = Some(m.total);
                    state.dyn_best = cand.clone();
                }
                state.trail.push(TrailRecord {
                    iter: c,
                    phase,
                    candidate: Some(i),
                    total_mape: m.total,
                    per_stat_mape: m.per_stat,
                    neg_log_lik: Some(out.neg_log_lik[i]),
                    schedule: cand.clone(),
                    het_values: het_vec.clone(),
                });
            }
            state.dynamic_log.extend(out.log);
            state.candidates = out.next;
            state.dynamic_steps += 1;
        }
        Phase::Heterogeneous => {
            let cfg = HeterogeneousStepConfig {
                replications: config.replications,
                strategy: config.search,
            };
            let mut het = state.het.clone();
            let out = heterogeneous_calibration_step(
                model,
                &mut het,
                &state.dyn_best,
                &state.template,
                validation,
                &cfg,
                c,
                derive_seed(config.seed, &[stream::HET_SIM]),
                derive_seed(config.seed, &[stream::HET_PROPOSE, c as u64]),
            )?;
            state.het = het;
            state.trail.push(TrailRecord {
                iter: c,
                phase,
                candidate: None,
                total_mape: out.mape.total,
                per_stat_mape: out.mape.per_stat,
                neg_log_lik: None,
                schedule: state.dyn_best.clone(),
                het_values: out.row.params.clone(),
            });
            state.heterogeneous_log.push(out.row);
        }
    }
    state.iteration += 1;
    Ok(phase)
}

/// Reports the lowest-MAPE trail record: its own MAPE values plus parameter
/// errors of its combination.
pub fn finalize(config: &FrameworkConfig, validation: &ValidationData, state: CalibrationState, clustering_calls: usize) -> Result<FrameworkOutcome> {
    let best_index = select_best(&state.trail)?;
    let best = &state.trail[best_index];
    let best_schedule = best.schedule.clone();
    let best_assignment = state.template.with_flat_values(&best.het_values)?;
    let (dynamic_mae, heterogeneous_euclidean) = parameter_errors(config, &best_schedule, &best_assignment)?;
    let report = MetricsReport {
        stat_names: validation.trace.names.clone(),
        per_stat_mape: best.per_stat_mape.clone(),
        total_mape: best.total_mape,
        dynamic_mae,
        heterogeneous_euclidean,
    };
    Ok(FrameworkOutcome {
        state,
        best_index,
        best_schedule,
        best_assignment,
        report,
        clustering_calls,
    })
}

/// Runs iterations until `c_cal`, optionally snapshotting after each one.
/// Starts from `resume` when given, otherwise initializes (clustering once).
pub fn run_framework_with<M: AbmModel + ?Sized>(
    model: &M,
    config: &FrameworkConfig,
    validation: &ValidationData,
    clusterer: &mut dyn Clusterer,
    snapshot: Option<&Path>,
    resume: Option<CalibrationState>,
) -> Result<FrameworkOutcome> {
    config.validate()?;
    check_dim("validation horizon", model.horizon(), validation.trace.horizon())?;
    let (mut state, calls) = match resume {
        Some(s) => (s, 0),
        None => (initialize(model, config, clusterer)?, 1),
    };
    while state.iteration < config.c_cal {
        let mut next = state.clone();
        match step(model, config, validation, &mut next) {
            Ok(_) => state = next,
            Err(e) => {
                if let Some(p) = snapshot {
                    state.save(p)?;
                }
                return Err(e);
            }
        }
        if let Some(p) = snapshot {
            state.save(p)?;
        }
    }
    finalize(config, validation, state, calls)
}

pub fn run_framework<M: AbmModel + ?Sized>(model: &M, config: &FrameworkConfig, validation: &ValidationData) -> Result<FrameworkOutcome> {
    run_framework_with(model, config, validation, &mut DefaultClusterer, None, None)
}

/// `kind,name,index,value`: one row per timestep of each dynamic parameter
/// and per cluster of each heterogeneous parameter.
pub fn write_best_params_csv(path: &Path, schedule: &DynamicSchedule, het: &HeterogeneousAssignment) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kind", "name", "index", "value"])?;
    for (n, r) in schedule.ranges.iter().enumerate() {
        for t in 0..schedule.horizon() {
            w.write_record(["dynamic".to_string(), r.name.clone(), t.to_string(), schedule.values[(n, t)].to_string()])?;
        }
    }
    for (p, r) in het.ranges.iter().enumerate() {
        for k in 0..het.num_clusters() {
            w.write_record(["heterogeneous".to_string(), r.name.clone(), k.to_string(), het.values[(k, p)].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `best_params.csv` back into the dynamic and heterogeneous value matrices.
pub fn read_best_params_csv(path: &Path) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let mut dynamic: Vec<(String, usize, f64)> = Vec::new();
    let mut het: Vec<(String, usize, f64)> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let perr = |m: String| CalibError::Parse { line: i + 2, message: m };
        let index: usize = rec.get(2).unwrap_or_default().parse().map_err(|e| perr(format!("index: {e}")))?;
        let value: f64 = rec.get(3).unwrap_or_default().parse().map_err(|e| perr(format!("value: {e}")))?;
        let entry = (rec.get(1).unwrap_or_default().to_string(), index, value);
        match rec.get(0).unwrap_or_default() {
            "dynamic" => dynamic.push(entry),
            "heterogeneous" => het.push(entry),
            other => return Err(perr(format!("unknown kind '{other}'"))),
        }
    }
    fn to_matrix(rows: &[(String, usize, f64)], by_row_name: bool) -> DMatrix<f64> {
        let mut names: Vec<&str> = Vec::new();
        for (n, _, _) in rows {
            if !names.contains(&n.as_str()) {
                names.push(n);
            }
        }
        let len = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let (nr, nc) = if by_row_name { (names.len(), len) } else { (len, names.len()) };
        let mut m = DMatrix::zeros(nr, nc);
        for (n, idx, v) in rows {
            let p = names.iter().position(|x| x == n).expect("name registered");
            if by_row_name {
                m[(p, *idx)] = *v;
            } else {
                m[(*idx, p)] = *v;
            }
        }
        m
    }
    Ok((to_matrix(&dynamic, true), to_matrix(&het, false)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wealth::{generate_validation, WealthModel, WealthModelConfig};

    struct Counting(usize);

    impl Clusterer for Counting {
        fn cluster(&mut self, mode: &ClusteringMode, t: Option<&AgentTrace>, c: &FrameworkConfig, s: u64) -> Result<Vec<usize>> {
            self.0 += 1;
            DefaultClusterer.cluster(mode, t, c, s)
        }
    }

    fn setup(horizon: usize) -> (WealthModel, ValidationData) {
        let model = WealthModel::new(WealthModelConfig {
            horizon,
            ..Default::default()
        })
        .unwrap();
        let v = generate_validation(&model, &synthetic_schedule(horizon), &synthetic_assignment(100), 20, 5).unwrap();
        (model, v)
    }

    fn small_config(horizon: usize) -> FrameworkConfig {
        FrameworkConfig {
            model: WealthModelConfig {
                horizon,
                ..Default::default()
            },
            c_cal: 10,
            c_dyn: 2,
            c_het: 3,
            replications: 2,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn alternation_freezes_the_other_kind_and_clusters_once() {
        let (model, val) = setup(20);
        let cfg = small_config(20);
        let mut counter = Counting(0);
        let out = run_framework_with(&model, &cfg, &val, &mut counter, None, None).unwrap();
        assert_eq!(counter.0, 1);
        assert_eq!(out.clustering_calls, 1);
        let trail = &out.state.trail;
        let phases: Vec<Phase> = (0..10).map(|c| trail.iter().find(|r| r.iter == c).unwrap().phase).collect();
        assert_eq!(phases, (0..10).map(|c| phase_of(c, 2, 3)).collect::<Vec<_>>());
        for block in trail.chunk_by(|a, b| a.phase == b.phase) {
            match block[0].phase {
                Phase::Dynamic => assert!(block.iter().all(|r| r.het_values == block[0].het_values)),
                Phase::Heterogeneous => assert!(block.iter().all(|r| r.schedule == block[0].schedule)),
            }
        }
        assert_eq!(trail.iter().filter(|r| r.phase == Phase::Dynamic).count(), 4 * cfg.candidates);
        let min = trail.iter().map(|r| r.total_mape).fold(f64::INFINITY, f64::min);
        assert_eq!(trail[out.best_index].total_mape, min);
        assert_eq!(out.report.total_mape, min);
        assert_eq!(out.report.per_stat_mape, trail[out.best_index].per_stat_mape);
        assert!(out.report.dynamic_mae.unwrap() >= 0.0);
        assert!(out.report.heterogeneous_euclidean.unwrap() >= 0.0);
    }

    #[test]
    fn heterogeneous_block_uses_best_of_previous_dynamic_block() {
        let (model, val) = setup(20);
        let mut cfg = small_config(20);
        cfg.c_cal = 3;
        let out = run_framework(&model, &cfg, &val).unwrap();
        let dyn_recs: Vec<&TrailRecord> = out.state.trail.iter().filter(|r| r.phase == Phase::Dynamic).collect();
        let best = dyn_recs.iter().min_by(|a, b| a.total_mape.total_cmp(&b.total_mape)).unwrap();
        let het_rec = out.state.trail.iter().find(|r| r.phase == Phase::Heterogeneous).unwrap();
        assert_eq!(het_rec.schedule, best.schedule);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (model, val) = setup(20);
        let cfg = small_config(20);
        let full = run_framework(&model, &cfg, &val).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let snap = dir.path().join("state.json");
        let partial = FrameworkConfig { c_cal: 6, ..cfg.clone() };
        run_framework_with(&model, &partial, &val, &mut DefaultClusterer, Some(&snap), None).unwrap();
        let state = CalibrationState::load(&snap).unwrap();
        assert_eq!(state.iteration, 6);
        let resumed = run_framework_with(&model, &cfg, &val, &mut DefaultClusterer, None, Some(state)).unwrap();
        assert_eq!(resumed.state, full.state);
        assert_eq!(resumed.report, full.report);
    }

    #[test]
    fn pure_modes() {
        let (model, val) = setup(20);
        let mut cfg = small_config(20);
        cfg.c_cal = 4;
        cfg.c_dyn = 1;
        cfg.c_het = 0;
        cfg.init.heterogeneous = InitMode::Reference;
        let out = run_framework(&model, &cfg, &val).unwrap();
        assert!(out.state.trail.iter().all(|r| r.phase == Phase::Dynamic));
        assert_eq!(out.report.heterogeneous_euclidean, Some(0.0));
        cfg.c_dyn = 0;
        cfg.c_het = 1;
        cfg.init.dynamic = InitMode::Reference;
        cfg.init.heterogeneous = InitMode::Random;
        let out = run_framework(&model, &cfg, &val).unwrap();
        assert!(out.state.trail.iter().all(|r| r.phase == Phase::Heterogeneous));
        assert_eq!(out.report.dynamic_mae, Some(0.0));
        assert_eq!(out.state.heterogeneous_log.len(), 4);
    }

    #[test]
    fn output_files_round_trip() {
        let (model, val) = setup(20);
        let mut cfg = small_config(20);
        cfg.c_cal = 2;
        let out = run_framework(&model, &cfg, &val).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let rp = dir.path().join("report.csv");
        out.report.write_csv(&rp).unwrap();
        assert_eq!(MetricsReport::read_csv(&rp).unwrap(), out.report);
        let bp = dir.path().join("best_params.csv");
        write_best_params_csv(&bp, &out.best_schedule, &out.best_assignment).unwrap();
        let (d, h) = read_best_params_csv(&bp).unwrap();
        assert_eq!(d, out.best_schedule.values);
        assert_eq!(h, out.best_assignment.values);
    }

    #[test]
    fn learned_clustering_runs_once() {
        let (model, val) = setup(20);
        let mut cfg = small_config(20);
        cfg.c_cal = 1;
        cfg.clustering = super::super::config::ClusteringConfig::Parametric {
            k: 2,
            vae: crate::clustering::VaeConfig {
                epochs: 5,
                ..Default::default()
            },
        };
        let mut counter = Counting(0);
        let out = run_framework_with(&model, &cfg, &val, &mut counter, None, None).unwrap();
        assert_eq!(counter.0, 1);
        assert!(out.state.template.num_clusters() <= 2);
    }
}
