//! The round loop: client sampling, broadcast, local training, aggregation,
//! server update and checkpoint evaluation.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::index;
use rayon::prelude::*;

use crate::algorithm::Algorithm;
use crate::client::{local_train, ClientConfig, ClientOpt, ClientTask, ClientUpdate, ControlVariates};
use crate::data::{
    dirichlet_partition, gen_synthetic, load_csv_dataset, train_test_split, CsvSchema, Dataset, Partition,
};
use crate::error::{Error, Result};
use crate::model::{evaluate, init_params, Activation, ModelKind, ModelSpec};
use crate::params::ParamVector;
use crate::rng::{stream_rng, Stream};
use crate::server::{aggregate, aggregate_control, server_step, AggregationMode, ServerConfig, ServerState};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic { num_classes: usize, dim: usize, samples_per_class: usize, spread: f64 },
    Csv { path: PathBuf, schema: CsvSchema },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub alpha: f64,
    pub test_fraction: f64,
    /// Seed for generation, splitting and partitioning; the experiment seed
    /// when absent.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub num_clients: usize,
    pub sample_ratio: f64,
    pub rounds: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub client: ClientConfig,
    pub server: ServerConfig,
    pub model: ModelConfig,
    pub data: DataConfig,
    /// Worker threads for client training; 1 runs clients serially.
    pub threads: usize,
    /// Record wall-clock time per round. Off by default so metrics files are
    /// a pure function of the config.
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    pub fn algorithm(&self) -> Algorithm {
        Algorithm::new(self.client.opt_c, self.server.opt_s)
    }

    pub fn clients_per_round(&self) -> usize {
        ((self.sample_ratio * self.num_clients as f64).floor() as usize).max(1)
    }

    pub fn data_seed(&self) -> u64 {
        self.data.seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.num_clients == 0 {
            return bad("num_clients must be >= 1".into());
        }
        if !(self.sample_ratio > 0.0 && self.sample_ratio <= 1.0) {
            return bad(format!("sample_ratio must lie in (0, 1], got {}", self.sample_ratio));
        }
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1".into());
        }
        if self.threads == 0 {
            return bad("threads must be >= 1".into());
        }
        if !(self.data.alpha > 0.0 && self.data.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.data.alpha));
        }
        if !(0.0..1.0).contains(&self.data.test_fraction) {
            return bad(format!("test_fraction must lie in [0, 1), got {}", self.data.test_fraction));
        }
        if self.model.kind == ModelKind::Mlp1 && self.model.hidden_dim == 0 {
            return bad("mlp1 needs hidden_dim >= 1".into());
        }
        self.client.validate()?;
        self.server.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    Diverged { round: usize, reason: String },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Diverged { .. } => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub selected: Vec<usize>,
    pub train_loss: f64,
    /// `None` between checkpoints.
    pub test_loss: Option<f64>,
    pub test_acc: Option<f64>,
    /// Running maximum of checkpoint accuracy; NaN before the first checkpoint.
    pub best_acc: f64,
    pub wall_ms: u64,
    pub payload_bytes: usize,
    pub status: RunStatus,
}

impl RoundMetrics {
    /// Row emitted in place of a checkpoint when a run fails.
    pub fn sentinel(round: usize, best_acc: f64, reason: String) -> Self {
        Self {
            round,
            selected: Vec::new(),
            train_loss: f64::NAN,
            test_loss: None,
            test_acc: None,
            best_acc,
            wall_ms: 0,
            payload_bytes: 0,
            status: RunStatus::Diverged { round, reason },
        }
    }
}

/// `max(1, floor(C N))` distinct client ids, sorted ascending.
pub fn sample_clients(num_clients: usize, sample_ratio: f64, round: usize, seed: u64) -> Vec<usize> {
    let k = ((sample_ratio * num_clients as f64).floor() as usize).clamp(1, num_clients.max(1));
    if k >= num_clients {
        return (0..num_clients).collect();
    }
    let mut rng = stream_rng(seed, Stream::Sampling, &[round as u64]);
    let mut ids = index::sample(&mut rng, num_clients, k).into_vec();
    ids.sort_unstable();
    ids
}

/// Mutable state of a run between rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub server: ServerState,
    /// Per-client control variates (scaf only); zero until first selection.
    pub client_controls: Vec<ParamVector>,
    /// Best checkpoint accuracy so far and the model that reached it.
    pub best_acc: Option<f64>,
    pub best_w: ParamVector,
}

/// Data, partition and model fixed for the lifetime of a run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub spec: ModelSpec,
    pub train: Dataset,
    pub test: Dataset,
    pub partition: Partition,
    pool: Option<std::sync::Arc<rayon::ThreadPool>>,
}

impl Experiment {
    /// Loads or generates data, splits and partitions it.
    pub fn prepare(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.data_seed();
        let full = match &cfg.data.source {
            DataSource::Synthetic { num_classes, dim, samples_per_class, spread } => {
                gen_synthetic(*num_classes, *dim, *samples_per_class, *spread, seed)?
            }
            DataSource::Csv { path, schema } => load_csv_dataset(path, schema)?,
        };
        let (train, test) = train_test_split(&full, cfg.data.test_fraction, seed)?;
        let partition = dirichlet_partition(&train, cfg.num_clients, cfg.data.alpha, seed)?;
        Self::from_parts(cfg, train, test, partition)
    }

    /// Uses an explicit split and partition.
    pub fn from_parts(cfg: ExperimentConfig, train: Dataset, test: Dataset, partition: Partition) -> Result<Self> {
        cfg.validate()?;
        if partition.num_clients() != cfg.num_clients {
            return Err(Error::InvalidArgument(format!(
                "partition has {} clients, config says {}",
                partition.num_clients(),
                cfg.num_clients
            )));
        }
        if train.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        if !test.is_empty() && (test.dim() != train.dim() || test.num_classes() != train.num_classes()) {
            return Err(Error::InvalidArgument("train and test sets disagree on shape".into()));
        }
        let spec = ModelSpec {
            kind: cfg.model.kind,
            input_dim: train.dim(),
            num_classes: train.num_classes(),
            hidden_dim: cfg.model.hidden_dim,
            activation: cfg.model.activation,
        };
        spec.validate()?;
        let pool = if cfg.threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Some(std::sync::Arc::new(pool))
        } else {
            None
        };
        Ok(Self { cfg, spec, train, test, partition, pool })
    }

    /// Dataset used for checkpoint evaluation: the test split, or the
    /// training set when no test split was requested.
    pub fn eval_set(&self) -> &Dataset {
        if self.test.is_empty() {
            &self.train
        } else {
            &self.test
        }
    }

    pub fn initial_state(&self) -> RunState {
        let w = init_params(&self.spec, self.cfg.seed);
        let scaf = self.cfg.client.opt_c == ClientOpt::Scaf;
        let client_controls = if scaf { vec![ParamVector::zeros(w.len()); self.cfg.num_clients] } else { Vec::new() };
        RunState { server: ServerState::new(w.clone(), scaf), client_controls, best_acc: None, best_w: w }
    }

    pub fn is_checkpoint(&self, round: usize) -> bool {
        round.is_multiple_of(self.cfg.eval_every) || round == self.cfg.rounds
    }

    fn train_clients(
        &self,
        state: &RunState,
        selected: &[usize],
        round: usize,
    ) -> Vec<Result<(ClientUpdate, Option<ParamVector>)>> {
        let work = |&client: &usize| {
            let task = ClientTask {
                spec: &self.spec,
                data: &self.train,
                shard: self.partition.shard(client),
                client,
                round,
                seed: self.cfg.seed,
            };
            let control =
                state.server.c.as_ref().map(|global| ControlVariates { global, local: &state.client_controls[client] });
            local_train(&state.server.w, control, &task, &self.cfg.client)
        };
        match &self.pool {
            Some(pool) => pool.install(|| selected.par_iter().map(work).collect()),
            None => selected.iter().map(work).collect(),
        }
    }

    /// One round. Rounds are numbered from 1. On error `state` is left
    /// untouched.
    pub fn run_round(&self, state: &mut RunState, round: usize) -> Result<RoundMetrics> {
        let started = Instant::now();
        let selected = sample_clients(self.cfg.num_clients, self.cfg.sample_ratio, round, self.cfg.seed);
        let mut updates = Vec::with_capacity(selected.len());
        let mut new_controls = Vec::new();
        for result in self.train_clients(state, &selected, round) {
            let (update, new_c) = result?;
            if let Some(c) = new_c {
                new_controls.push((update.client, c));
            }
            updates.push(update);
        }

        let mode = match self.cfg.client.opt_c {
            ClientOpt::Nova => AggregationMode::Nova,
            _ => AggregationMode::WeightedAvg,
        };
        let delta = aggregate(&updates, mode)?;
        let control_delta = match state.server.c {
            Some(_) => Some(aggregate_control(&updates)?),
            None => None,
        };
        let mut server = server_step(&state.server, &delta, &self.cfg.server).map_err(|e| match e {
            Error::NonFinite { .. } => Error::ServerDiverged { round },
            other => other,
        })?;
        if let (Some(c), Some(dc)) = (server.c.as_mut(), control_delta.as_ref()) {
            c.add_scaled_in_place(dc, 1.0)?;
        }
        server.round = round;

        let (test_loss, test_acc) = if self.is_checkpoint(round) {
            let (l, a) = evaluate(&self.spec, &server.w, &self.eval_set().all())?;
            (Some(l), Some(a))
        } else {
            (None, None)
        };

        state.server = server;
        for (client, c) in new_controls {
            state.client_controls[client] = c;
        }
        if let Some(acc) = test_acc {
            if state.best_acc.is_none_or(|best| acc > best) {
                state.best_acc = Some(acc);
                state.best_w = state.server.w.clone();
            }
        }

        let train_loss = updates.iter().map(|u| u.train_loss).sum::<f64>() / updates.len() as f64;
        Ok(RoundMetrics {
            round,
            selected,
            train_loss,
            test_loss,
            test_acc,
            best_acc: state.best_acc.unwrap_or(f64::NAN),
            wall_ms: if self.cfg.record_wall_time { started.elapsed().as_millis() as u64 } else { 0 },
            payload_bytes: updates.iter().map(ClientUpdate::payload_bytes).sum(),
            status: RunStatus::Ok,
        })
    }

    /// Runs every round, keeping checkpoint rows. A failing round ends the
    /// run with a sentinel row.
    pub fn run(&self) -> RunResult {
        let mut state = self.initial_state();
        let mut metrics = Vec::new();
        let mut status = RunStatus::Ok;
        let mut history = Vec::with_capacity(self.cfg.rounds);
        for round in 1..=self.cfg.rounds {
            match self.run_round(&mut state, round) {
                Ok(m) => {
                    history.push(m.selected.clone());
                    if m.test_acc.is_some() {
                        metrics.push(m);
                    }
                }
                Err(e) => {
                    let reason = e.to_string();
                    metrics.push(RoundMetrics::sentinel(round, state.best_acc.unwrap_or(f64::NAN), reason.clone()));
                    status = RunStatus::Diverged { round, reason };
                    break;
                }
            }
        }
        RunResult {
            algorithm: self.cfg.algorithm(),
            spec: self.spec,
            metrics,
            final_w: state.server.w,
            best_w: state.best_w,
            best_acc: state.best_acc,
            status,
            selections: history,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub spec: ModelSpec,
    /// Checkpoint rows, ending with a sentinel row on failure.
    pub metrics: Vec<RoundMetrics>,
    pub final_w: ParamVector,
    pub best_w: ParamVector,
    pub best_acc: Option<f64>,
    pub status: RunStatus,
    /// Selected client ids per completed round.
    pub selections: Vec<Vec<usize>>,
}

impl RunResult {
    /// Best accuracy over checkpoints up to and including `round`.
    pub fn best_acc_at(&self, round: usize) -> Option<f64> {
        self.metrics
            .iter()
            .filter(|m| m.round <= round && m.status == RunStatus::Ok)
            .filter_map(|m| m.test_acc)
            .fold(None, |best, a| Some(best.map_or(a, |b: f64| b.max(a))))
    }
}

pub fn run_experiment(cfg: ExperimentConfig) -> Result<RunResult> {
    Ok(Experiment::prepare(cfg)?.run())
}
