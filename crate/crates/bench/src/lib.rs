//! Fixtures shared by the benchmarks.

use fedgrid::data::gen_synthetic;
use fedgrid::presets::desk_benchmark;
use fedgrid::{ClientOpt, Dataset, Experiment, ModelSpec, ServerOpt};

/// Desk-benchmark sized blobs: 10 classes, d = 20, 200 per class.
pub fn blobs() -> Dataset {
    gen_synthetic(10, 20, 200, 3.0, 0).expect("valid blob parameters")
}

pub fn mlp_spec(ds: &Dataset) -> ModelSpec {
    ModelSpec::mlp1(ds.dim(), 32, ds.num_classes(), fedgrid::Activation::Tanh)
}

/// Prepared desk-benchmark experiment for one algorithm.
pub fn desk(opt_c: ClientOpt, opt_s: ServerOpt, threads: usize) -> Experiment {
    let mut cfg = desk_benchmark(opt_c, opt_s, 0);
    cfg.threads = threads;
    Experiment::prepare(cfg).expect("desk benchmark config is valid")
}
