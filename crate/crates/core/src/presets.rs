//! Ready-made configurations used by the benchmark, the smoke grid and the
//! built-in checks.

use crate::client::{ClientConfig, ClientOpt, ScafOption};
use crate::config::*;
use crate::data::BatchSize;
use crate::model::{Activation, ModelKind};
use crate::orchestrator::{DataConfig, DataSource, ExperimentConfig, ModelConfig};
use crate::server::{ServerConfig, ServerOpt};

/// Blob spread of the desk benchmark.
pub const DESK_SPREAD: f64 = 3.0;

/// Reference hyperparameters on synthetic blobs with a logistic model.
pub fn reference(opt_c: ClientOpt, opt_s: ServerOpt, data: DataSource) -> ExperimentConfig {
    ExperimentConfig {
        num_clients: DEFAULT_NUM_CLIENTS,
        sample_ratio: DEFAULT_SAMPLE_RATIO,
        rounds: DEFAULT_ROUNDS,
        eval_every: DEFAULT_EVAL_EVERY,
        seed: 0,
        client: ClientConfig {
            opt_c,
            local_epochs: DEFAULT_LOCAL_EPOCHS,
            batch_size: BatchSize::Fixed(DEFAULT_BATCH_SIZE),
            lr: DEFAULT_LR,
            momentum: DEFAULT_MOMENTUM,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            prox_mu: DEFAULT_PROX_MU,
            scaf_option: ScafOption::I,
        },
        server: ServerConfig::new(opt_s),
        model: ModelConfig { kind: ModelKind::Logistic, hidden_dim: 0, activation: Activation::Relu },
        data: DataConfig { source: data, alpha: DEFAULT_ALPHA, test_fraction: DEFAULT_TEST_FRACTION, seed: None },
        threads: 1,
        record_wall_time: false,
    }
}

/// 10-class blobs (d = 20, 200 per class), N = 20, C = 0.5, Dir(0.1),
/// 200 rounds, checkpoints every 10 rounds.
pub fn desk_benchmark(opt_c: ClientOpt, opt_s: ServerOpt, seed: u64) -> ExperimentConfig {
    let data = DataSource::Synthetic { num_classes: 10, dim: 20, samples_per_class: 200, spread: DESK_SPREAD };
    ExperimentConfig {
        num_clients: 20,
        sample_ratio: 0.5,
        rounds: 200,
        eval_every: 10,
        seed,
        ..reference(opt_c, opt_s, data)
    }
}

/// Small run: 4-class blobs, N = 8, C = 0.5, five rounds.
pub fn smoke(opt_c: ClientOpt, opt_s: ServerOpt, seed: u64) -> ExperimentConfig {
    let data = DataSource::Synthetic { num_classes: 4, dim: 5, samples_per_class: 40, spread: 1.0 };
    ExperimentConfig {
        num_clients: 8,
        sample_ratio: 0.5,
        rounds: 5,
        eval_every: 1,
        seed,
        ..reference(opt_c, opt_s, data)
    }
}
