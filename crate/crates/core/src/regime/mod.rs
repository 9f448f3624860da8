//! Dynamic-parameter calibration.
//!
//! Each iteration evaluates I candidate schedules, fits one HMM per
//! candidate to its simulation-minus-validation deviations, merges the
//! regime labelings into blocks of timesteps with identical label tuples,
//! fits a likelihood-weighted Beta posterior per block and parameter, and
//! draws the next candidates from those posteriors.

pub mod beta;
pub mod generate;
pub mod hmm;
pub mod likelihood;
pub mod merge;
pub mod step;

pub use beta::{fit_beta, BetaPosterior};
pub use generate::{generate_next, mode_selection_value, GenerationRule};
pub use hmm::{fit_hmm, HmmFit};
pub use likelihood::{compute_likelihoods, LikelihoodMatrix};
pub use merge::{detect_poor_fit, merge_regimes, MergedRegimes};
pub use step::{
    dynamic_calibration_step, read_dynamic_log_csv, write_dynamic_log_csv, CandidateSet, DynamicLogRow, DynamicStepConfig, DynamicStepOutcome,
};
