//! Simulation outputs: summary traces, agent-level traces and validation data.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CalibError, Result};
use crate::params::{DynamicSchedule, HeterogeneousAssignment};

/// S x T matrix of per-step summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTrace {
    pub names: Vec<String>,
    pub stats: DMatrix<f64>,
}

impl SummaryTrace {
    pub fn new(names: Vec<String>, stats: DMatrix<f64>) -> Result<Self> {
        check_dim("summary trace rows", names.len(), stats.nrows())?;
        Ok(Self { names, stats })
    }

    pub fn num_stats(&self) -> usize {
        self.stats.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.stats.ncols()
    }

    pub fn check_compatible(&self, other: &SummaryTrace) -> Result<()> {
        check_dim("summary statistic count", self.num_stats(), other.num_stats())?;
        check_dim("summary horizon", self.horizon(), other.horizon())?;
        if self.names != other.names {
            return Err(CalibError::InvalidInput(format!(
                "summary statistic names differ: {:?} vs {:?}",
                self.names, other.names
            )));
        }
        Ok(())
    }

    /// Element-wise mean of traces sharing names and shape.
    pub fn mean_of(traces: &[SummaryTrace]) -> Result<SummaryTrace> {
        let first = traces
            .first()
            .ok_or_else(|| CalibError::InvalidInput("mean of zero traces".into()))?;
        let mut acc = DMatrix::zeros(first.num_stats(), first.horizon());
        for t in traces {
            first.check_compatible(t)?;
            acc += &t.stats;
        }
        acc /= traces.len() as f64;
        SummaryTrace::new(first.names.clone(), acc)
    }
}

/// Per-agent Att x T state trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrace {
    pub attrs: Vec<String>,
    pub agents: Vec<DMatrix<f64>>,
}

impl AgentTrace {
    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn horizon(&self) -> usize {
        self.agents.first().map_or(0, |m| m.ncols())
    }

    /// Agent-wise mean over several runs of the same model.
    pub fn mean_of(traces: &[AgentTrace]) -> Result<AgentTrace> {
        let first = traces
            .first()
            .ok_or_else(|| CalibError::InvalidInput("mean of zero agent traces".into()))?;
        let mut agents = first.agents.clone();
        for tr in &traces[1..] {
            check_dim("agent count", first.num_agents(), tr.num_agents())?;
            for (acc, m) in agents.iter_mut().zip(&tr.agents) {
                *acc += m;
            }
        }
        for m in &mut agents {
            *m /= traces.len() as f64;
        }
        Ok(AgentTrace {
            attrs: first.attrs.clone(),
            agents,
        })
    }

    /// Flattened A x (Att*T) design matrix, attribute-major per row.
    pub fn flattened(&self) -> DMatrix<f64> {
        let att = self.attrs.len();
        let t = self.horizon();
        DMatrix::from_fn(self.num_agents(), att * t, |a, j| self.agents[a][(j / t, j % t)])
    }
}

/// Where a validation set came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub replications: usize,
    pub master_seed: u64,
    pub schedule: Option<DynamicSchedule>,
    pub heterogeneous: Option<HeterogeneousAssignment>,
}

/// Observed summary statistics the calibration targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationData {
    pub trace: SummaryTrace,
    pub provenance: Provenance,
}

impl ValidationData {
    pub fn from_trace(trace: SummaryTrace) -> Self {
        Self {
            trace,
            provenance: Provenance {
                replications: 0,
                master_seed: 0,
                schedule: None,
                heterogeneous: None,
            },
        }
    }
}
