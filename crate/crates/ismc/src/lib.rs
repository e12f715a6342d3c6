//! Two-phase posterior inference for latent variable models: an MCMC chain
//! on an approximate posterior followed by parallel importance-sampling
//! correction, with pseudo-marginal and delayed-acceptance baselines.

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod output;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{PipelineError, Result};
pub use experiment::{build_experiment, Experiment};
pub use pipeline::{run, RunResult};
