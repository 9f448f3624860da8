//! Heterogeneous-parameter calibration: a Matérn-5/2 Gaussian process over
//! the evaluated parameter vectors and a portfolio of acquisition
//! functions choosing the next vector.

pub mod acquisition;
pub mod gp;
pub mod search;
pub mod step;

pub use acquisition::{cooling_weight, expected_improvement, weighted_ei};
pub use gp::{fit_gp, matern52, GaussianProcess, GpFit, KernelHyperparams, PosteriorPrediction};
pub use search::{propose_next, propose_with_branch, Branch, Proposal, SearchStrategy, SurrogateView};
pub use step::{
    build_surrogate, heterogeneous_calibration_step, read_heterogeneous_log_csv, write_heterogeneous_log_csv, EvaluationLog, EvaluationRecord,
    HeterogeneousLogRow, HeterogeneousState, HeterogeneousStepConfig, HeterogeneousStepOutcome,
};
