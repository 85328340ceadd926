//! Calibration run for the desk benchmark: FedAvg and ProxYogi (plus their
//! one-sided parents) over seeds 0..3 at a given blob spread.
//!
//! `cargo run --release -p fedgrid --example calibrate [spread]`

use fedgrid::orchestrator::DataSource;
use fedgrid::presets::{desk_benchmark, DESK_SPREAD};
use fedgrid::{run_experiment, Algorithm, ClientOpt, ServerOpt};

fn main() {
    let spread: f64 = std::env::args().nth(1).map_or(DESK_SPREAD, |s| s.parse().expect("spread"));
    for (c, s) in [
        (ClientOpt::Sgd, ServerOpt::Sgd),
        (ClientOpt::Prox, ServerOpt::Yogi),
        (ClientOpt::Sgd, ServerOpt::Yogi),
        (ClientOpt::Prox, ServerOpt::Sgd),
    ] {
        let accs: Vec<f64> = (0..3)
            .map(|seed| {
                let mut cfg = desk_benchmark(c, s, seed);
                if let DataSource::Synthetic { spread: sp, .. } = &mut cfg.data.source {
                    *sp = spread;
                }
                run_experiment(cfg).expect("valid config").best_acc.unwrap_or(f64::NAN)
            })
            .collect();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        println!("{:<10} spread {spread}: best acc per seed {accs:?}, mean {mean:.4}", Algorithm::new(c, s).name());
    }
}
