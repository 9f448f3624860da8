//! Alternating calibration: blocks of dynamic iterations and blocks of
//! heterogeneous iterations, with one error scale (total MAPE) ranking every
//! evaluated combination.

pub mod config;
pub mod run;
pub mod trail;

pub use crate::metrics::{dynamic_mae, heterogeneous_euclidean, mape, Mape};
pub use config::{ClusteringConfig, FrameworkConfig, InitConfig, InitMode, ParamRanges, ReferenceMode, ValidationConfig};
pub use run::{
    evaluate_parameters, finalize, initialize, parameter_errors, read_best_params_csv, reference_parameters, run_framework, run_framework_with, step,
    write_best_params_csv, CalibrationState, Clusterer, DefaultClusterer, FrameworkOutcome, MetricsReport,
};
pub use trail::{phase_of, read_trail_csv, select_best, write_trail_csv, Phase, TrailRecord, TrailRow};
