//! Agent sub-population extraction: a VAE compresses each agent's
//! trajectory to a short code, then a parametric (GMM) or nonparametric
//! (DPMM) mixture groups the codes.

pub mod dpmm;
pub mod gmm;
pub mod vae;

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CalibError, Result};
use crate::params::{HeterogeneousAssignment, ParamRange};
use crate::rng::derive_seed;
use crate::trace::AgentTrace;

pub use dpmm::{fit_dpmm, NigPrior};
pub use gmm::{fit_gmm, permutation_accuracy, MixtureKind, MixtureModel};
pub use vae::{train_vae, VaeConfig, VaeModel};

/// How agents are grouped before heterogeneous calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ClusteringMode {
    /// Use a fixed cluster id per agent.
    Given { cluster_of_agent: Vec<usize> },
    Parametric { k: usize },
    Nonparametric { gamma: f64 },
}

/// Output of [`cluster_agents`]. Codes and mixture are absent in `Given` mode.
#[derive(Debug, Clone)]
pub struct ClusteringResult {
    pub cluster_of_agent: Vec<usize>,
    pub codes: Option<DMatrix<f64>>,
    pub mixture: Option<MixtureModel>,
    pub vae: Option<VaeModel>,
}

impl ClusteringResult {
    pub fn num_clusters(&self) -> usize {
        self.cluster_of_agent.iter().copied().max().map_or(0, |m| m + 1)
    }
}

/// Runs the configured clustering on agent trajectories.
pub fn cluster_agents(
    traces: &AgentTrace,
    mode: &ClusteringMode,
    vae_config: &VaeConfig,
    dpmm_sweeps: usize,
    seed: u64,
) -> Result<ClusteringResult> {
    if let ClusteringMode::Given { cluster_of_agent } = mode {
        check_dim("given cluster assignment", traces.num_agents(), cluster_of_agent.len())?;
        return Ok(ClusteringResult {
            cluster_of_agent: cluster_of_agent.clone(),
            codes: None,
            mixture: None,
            vae: None,
        });
    }
    let vae = train_vae(traces, vae_config, derive_seed(seed, &[0]))?;
    let codes = vae.encode(traces)?;
    let mixture = match mode {
        ClusteringMode::Parametric { k } => fit_gmm(&codes, *k, derive_seed(seed, &[1]))?,
        ClusteringMode::Nonparametric { gamma } => fit_dpmm(&codes, *gamma, dpmm_sweeps, derive_seed(seed, &[2]))?,
        ClusteringMode::Given { .. } => unreachable!("handled above"),
    };
    Ok(ClusteringResult {
        cluster_of_agent: mixture.assignments.clone(),
        codes: Some(codes),
        mixture: Some(mixture),
        vae: Some(vae),
    })
}

/// Heterogeneous assignment with one row per cluster, initialized to
/// `init` (one value per parameter) or the range midpoints.
pub fn build_assignment(
    cluster_of_agent: &[usize],
    ranges: &[ParamRange],
    init: Option<&[f64]>,
) -> Result<HeterogeneousAssignment> {
    let k = cluster_of_agent.iter().copied().max().map_or(0, |m| m + 1);
    if k == 0 {
        return Err(CalibError::InvalidInput("no agents to assign".into()));
    }
    let row: Vec<f64> = match init {
        Some(v) => {
            check_dim("initial heterogeneous values", ranges.len(), v.len())?;
            v.to_vec()
        }
        None => ranges.iter().map(ParamRange::midpoint).collect(),
    };
    let values = DMatrix::from_fn(k, ranges.len(), |_, n| row[n]);
    HeterogeneousAssignment::new(cluster_of_agent.to_vec(), values, ranges.to_vec())
}

/// `agent_id,h1..hH`.
pub fn write_codes_csv(path: &Path, codes: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["agent_id".to_string()];
    header.extend((1..=codes.ncols()).map(|h| format!("h{h}")));
    w.write_record(&header)?;
    for a in 0..codes.nrows() {
        let mut rec = vec![a.to_string()];
        rec.extend(codes.row(a).iter().map(|v| format!("{v:e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_codes_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len().saturating_sub(1);
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        check_dim("code row width", width + 1, rec.len())?;
        for v in rec.iter().skip(1) {
            data.push(v.parse::<f64>().map_err(|e| CalibError::Parse {
                line: i + 2,
                message: e.to_string(),
            })?);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, width, &data))
}

/// `agent_id,cluster`.
pub fn write_assignment_csv(path: &Path, cluster_of_agent: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["agent_id", "cluster"])?;
    for (a, c) in cluster_of_agent.iter().enumerate() {
        w.write_record([a.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_assignment_csv(path: &Path) -> Result<Vec<usize>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| -> Result<usize> {
            rec.get(k)
                .unwrap_or_default()
                .parse()
                .map_err(|e: std::num::ParseIntError| CalibError::Parse {
                    line: i + 2,
                    message: e.to_string(),
                })
        };
        let (agent, cluster) = (parse(0)?, parse(1)?);
        if agent != out.len() {
            return Err(CalibError::Parse {
                line: i + 2,
                message: format!("expected agent_id {}, found {agent}", out.len()),
            });
        }
        out.push(cluster);
    }
    Ok(out)
}
