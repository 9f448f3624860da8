use crate::error::Result;
use crate::params::{DynamicSchedule, HeterogeneousAssignment};
use crate::rng::replication_seed;
use crate::trace::{AgentTrace, SummaryTrace};

/// Output of one simulation run.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub summary: SummaryTrace,
    pub agents: AgentTrace,
}

/// A stochastic agent-based model whose randomness is fully determined by
/// a 64-bit seed. Calibration routines only interact with models through
/// this trait.
pub trait AbmModel: Sync {
    fn horizon(&self) -> usize;
    fn num_agents(&self) -> usize;
    fn stat_names(&self) -> Vec<String>;
    fn run(
        &self,
        schedule: &DynamicSchedule,
        het: &HeterogeneousAssignment,
        seed: u64,
    ) -> Result<SimulationRun>;
}

/// Runs `replications` seeds `base XOR splitmix64(r)` and returns the
/// element-wise mean summary trace.
pub fn mean_summary<M: AbmModel + ?Sized>(
    model: &M,
    schedule: &DynamicSchedule,
    het: &HeterogeneousAssignment,
    base_seed: u64,
    replications: usize,
) -> Result<SummaryTrace> {
    let runs = (0..replications as u64)
        .map(|r| {
            model
                .run(schedule, het, replication_seed(base_seed, r))
                .map(|run| run.summary)
        })
        .collect::<Result<Vec<_>>>()?;
    SummaryTrace::mean_of(&runs)
}
