//! Deterministic federated-learning simulation.
//!
//! A run combines a client-side variance-reduction mechanism
//! ([`ClientOpt`]: plain SGD, proximal correction, control variates or
//! normalized averaging) with a server optimizer ([`ServerOpt`]: SGD, Adam,
//! Adagrad or Yogi) over a Dirichlet label-skewed partition of a dataset.
//! Every random stream derives from the experiment seed, so a run is a pure
//! function of its [`ExperimentConfig`].

// Validation uses `!(x > 0.0)` on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithm;
pub mod check;
pub mod client;
pub mod config;
pub mod data;
pub mod error;
pub mod grid;
pub mod model;
pub mod orchestrator;
pub mod params;
pub mod persist;
pub mod presets;
pub mod report;
pub mod rng;
pub mod server;

pub use algorithm::Algorithm;
pub use client::{a_norm, local_train, ClientConfig, ClientOpt, ClientUpdate, ScafOption};
pub use config::{parse_config, ConfigFile, ParsedConfig};
pub use data::{BatchSize, Dataset, Partition};
pub use error::{Error, Result};
pub use grid::{run_grid, GridReport, GridSpec};
pub use model::{Activation, ModelKind, ModelSpec};
pub use orchestrator::{
    run_experiment, sample_clients, DataConfig, DataSource, Experiment, ExperimentConfig, ModelConfig, RoundMetrics,
    RunResult, RunStatus,
};
pub use params::ParamVector;
pub use server::{ServerConfig, ServerOpt, ServerState};
