//! Calibration of stochastic agent-based models.
//!
//! Two kinds of parameters are tuned against validation summary statistics:
//!
//! * **dynamic** parameters, which take a value per timestep, via hidden
//!   regime detection over simulation-vs-validation deviations and beta
//!   posteriors per merged regime ([`regime`]);
//! * **heterogeneous** parameters, which take a value per agent cluster, via
//!   latent clustering of agent trajectories ([`clustering`]) and Gaussian
//!   process Bayesian optimization ([`surrogate`]).
//!
//! [`framework`] alternates the two, and [`wealth`] provides the Wealth
//! Distribution model used as the reference test case.

pub mod clustering;
pub mod error;
pub mod framework;
pub mod io;
pub mod kmeans;
pub mod metrics;
pub mod model;
pub mod params;
pub mod presets;
pub mod regime;
pub mod report;
pub mod rng;
pub mod stats;
pub mod surrogate;
pub mod trace;
pub mod wealth;

pub use error::{CalibError, Result};
pub use model::{AbmModel, SimulationRun};
pub use params::{DynamicSchedule, HeterogeneousAssignment, ParamRange};
pub use trace::{AgentTrace, SummaryTrace, ValidationData};
