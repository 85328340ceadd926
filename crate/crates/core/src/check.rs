//! Oracle checks: each compares an implementation path against an
//! independently coded reference and reports the worst deviation.
//!
//! The `check` CLI verb runs [`run_all`]; the acceptance suite calls the
//! individual checks at full size.

use std::fmt;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::client::{local_train, ClientOpt, ClientTask, ScafOption};
use crate::data::{dirichlet_partition, BatchSize, Dataset, Partition};
use crate::error::Result;
use crate::model::{finite_diff_grad, init_params, loss_and_grad, Activation, ModelSpec};
use crate::orchestrator::{sample_clients, Experiment, ExperimentConfig};
use crate::params::ParamVector;
use crate::presets;
use crate::rng::{stream_rng, Stream};
use crate::server::{aggregate, server_step, AggregationMode, ServerConfig, ServerOpt, ServerState};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {} ({}; {:.2}s)", self.name, self.detail, self.elapsed.as_secs_f64())
    }
}

fn timed(name: impl Into<String>, f: impl FnOnce() -> Result<(bool, String)>) -> CheckOutcome {
    let started = Instant::now();
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    CheckOutcome { name: name.into(), passed, detail, elapsed: started.elapsed() }
}

fn within(worst: f64, tol: f64) -> (bool, String) {
    (worst <= tol, format!("max deviation {worst:.3e}, tolerance {tol:.0e}"))
}

/// Analytic vs central-difference gradients on random (spec, params, batch)
/// triples, `trials` per model kind. Error is
/// `|analytic - fd| / max(1, |fd|)`, maximized over coordinates.
pub fn gradient_check(trials: usize, seed: u64) -> CheckOutcome {
    timed(format!("gradient check ({trials} triples per model kind)"), || {
        let mut rng = stream_rng(seed, Stream::Init, &[u64::MAX]);
        let mut worst = 0.0f64;
        for trial in 0..2 * trials {
            let d = rng.random_range(1..=6);
            let k = rng.random_range(2..=5);
            let spec = if trial < trials {
                ModelSpec::logistic(d, k)
            } else {
                let act = if trial % 2 == 0 { Activation::Relu } else { Activation::Tanh };
                ModelSpec::mlp1(d, rng.random_range(1..=6), k, act)
            };
            let params: Vec<f64> = (0..spec.param_count())
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    0.5 * z
                })
                .collect();
            let params = ParamVector::new(params)?;
            let n = rng.random_range(1..=8);
            let features: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let ds = Dataset::new(features, d, labels, k)?;
            let (_, analytic) = loss_and_grad(&spec, &params, &ds.all())?;
            let numeric = finite_diff_grad(&spec, &params, &ds.all(), 1e-6)?;
            for (a, f) in analytic.as_slice().iter().zip(numeric.as_slice()) {
                worst = worst.max((a - f).abs() / f.abs().max(1.0));
            }
        }
        Ok(within(worst, 1e-5))
    })
}

fn gd_config(rounds: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = presets::smoke(ClientOpt::Sgd, ServerOpt::Sgd, seed);
    cfg.num_clients = 1;
    cfg.sample_ratio = 1.0;
    cfg.rounds = rounds;
    cfg.eval_every = rounds.max(1);
    cfg.client.local_epochs = 1;
    cfg.client.batch_size = BatchSize::FULL;
    cfg.client.momentum = 0.0;
    cfg.client.weight_decay = 0.0;
    cfg.client.lr = 0.1;
    cfg.server.server_lr = 1.0;
    cfg
}

/// FedAvg with one client, full batch, no momentum or decay and unit server
/// rate against a plain full-batch gradient-descent loop.
pub fn centralized_gd(rounds: usize, seed: u64) -> CheckOutcome {
    timed(format!("centralized GD vs FedAvg over {rounds} rounds"), || {
        let cfg = gd_config(rounds, seed);
        let lr = cfg.client.lr;
        let exp = Experiment::prepare(cfg)?;
        let mut state = exp.initial_state();
        let mut w = init_params(&exp.spec, seed);
        let mut worst = 0.0f64;
        for round in 1..=rounds {
            exp.run_round(&mut state, round)?;
            let (_, g) = loss_and_grad(&exp.spec, &w, &exp.train.all())?;
            for (wi, gi) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *wi -= lr * gi;
            }
            worst = worst.max(state.server.w.max_abs_diff(&w)?);
        }
        Ok(within(worst, 1e-10))
    })
}

/// Largest per-round, per-element distance between two runs' global models.
fn trajectory_distance(a: &Experiment, b: &Experiment) -> Result<f64> {
    let (mut sa, mut sb) = (a.initial_state(), b.initial_state());
    let mut worst = sa.server.w.max_abs_diff(&sb.server.w)?;
    for round in 1..=a.cfg.rounds {
        a.run_round(&mut sa, round)?;
        b.run_round(&mut sb, round)?;
        worst = worst.max(sa.server.w.max_abs_diff(&sb.server.w)?);
    }
    Ok(worst)
}

/// `prox` with `mu = 0` against `sgd`, for every server optimizer.
pub fn prox_zero_mu(seed: u64) -> CheckOutcome {
    timed("prox with mu = 0 equals sgd for every server optimizer", || {
        let mut worst = 0.0f64;
        for opt_s in ServerOpt::ALL {
            let plain = Experiment::prepare(presets::smoke(ClientOpt::Sgd, opt_s, seed))?;
            let mut cfg = presets::smoke(ClientOpt::Prox, opt_s, seed);
            cfg.client.prox_mu = 0.0;
            let prox = Experiment::prepare(cfg)?;
            worst = worst.max(trajectory_distance(&plain, &prox)?);
        }
        Ok(within(worst, 1e-12))
    })
}

/// Equal-size shards dealt round-robin from the training set.
fn equal_shards(n: usize, clients: usize) -> Result<Partition> {
    let per = n / clients;
    Partition::from_shards((0..clients).map(|c| (0..per).map(|j| j * clients + c).collect()).collect())
}

fn with_partition(cfg: ExperimentConfig, template: &Experiment, partition: Partition) -> Result<Experiment> {
    Experiment::from_parts(cfg, template.train.clone(), template.test.clone(), partition)
}

/// `nova` with equal sample counts and step counts against `sgd`.
pub fn nova_homogeneous(seed: u64) -> CheckOutcome {
    timed("nova with homogeneous clients equals FedAvg", || {
        let mut cfg = presets::smoke(ClientOpt::Sgd, ServerOpt::Sgd, seed);
        cfg.client.batch_size = BatchSize::Fixed(4);
        cfg.client.local_epochs = 2;
        let template = Experiment::prepare(cfg.clone())?;
        let shards = equal_shards(template.train.len(), cfg.num_clients)?;
        let avg = with_partition(cfg.clone(), &template, shards.clone())?;
        cfg.client.opt_c = ClientOpt::Nova;
        let nova = with_partition(cfg, &template, shards)?;
        Ok(within(trajectory_distance(&avg, &nova)?, 1e-12))
    })
}

/// `scaf` (option I, full batch, everyone selected) on identical shards
/// against `sgd`: the control correction `c - c_i` vanishes.
pub fn scaf_identical_shards(seed: u64) -> CheckOutcome {
    timed("scaf on identical shards equals FedAvg", || {
        let mut cfg = presets::smoke(ClientOpt::Sgd, ServerOpt::Sgd, seed);
        cfg.sample_ratio = 1.0;
        cfg.rounds = 10;
        cfg.client.batch_size = BatchSize::FULL;
        cfg.client.scaf_option = ScafOption::I;
        let template = Experiment::prepare(cfg.clone())?;
        let all: Vec<usize> = (0..template.train.len()).collect();
        let shards = Partition::from_shards(vec![all; cfg.num_clients])?;
        let avg = with_partition(cfg.clone(), &template, shards.clone())?;
        cfg.client.opt_c = ClientOpt::Scaf;
        let scaf = with_partition(cfg, &template, shards)?;
        Ok(within(trajectory_distance(&avg, &scaf)?, 1e-10))
    })
}

/// With `sgd` at unit server rate every round adds the aggregated update
/// exactly, so `w_T = w_0 + sum_t delta_t`.
pub fn sgd_telescoping(seed: u64) -> CheckOutcome {
    timed("server sgd at unit rate telescopes", || {
        let mut cfg = presets::smoke(ClientOpt::Sgd, ServerOpt::Sgd, seed);
        cfg.server.server_lr = 1.0;
        cfg.rounds = 10;
        let exp = Experiment::prepare(cfg)?;
        let mut state = exp.initial_state();
        let w0 = state.server.w.clone();
        let mut total = ParamVector::zeros(w0.len());
        let mut exact = true;
        for round in 1..=exp.cfg.rounds {
            let before = state.server.w.clone();
            let delta = replay_delta(&exp, &before, round)?;
            exp.run_round(&mut state, round)?;
            exact &= state.server.w == before.add_scaled(&delta, 1.0)?;
            total.add_scaled_in_place(&delta, 1.0)?;
        }
        let drift = state.server.w.max_abs_diff(&w0.add_scaled(&total, 1.0)?)?;
        let (passed, detail) = within(drift, 1e-12);
        Ok((passed && exact, format!("{detail}; per-round bit-exact: {exact}")))
    })
}

/// Aggregated update of one sgd round recomputed outside the orchestrator.
fn replay_delta(exp: &Experiment, w: &ParamVector, round: usize) -> Result<ParamVector> {
    let cfg = &exp.cfg;
    let updates = sample_clients(cfg.num_clients, cfg.sample_ratio, round, cfg.seed)
        .into_iter()
        .map(|client| {
            let task = ClientTask {
                spec: &exp.spec,
                data: &exp.train,
                shard: exp.partition.shard(client),
                client,
                round,
                seed: cfg.seed,
            };
            local_train(w, None, &task, &cfg.client).map(|(u, _)| u)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(&updates, AggregationMode::WeightedAvg)
}

/// One adaptive step from zero state with `delta = 0.1` everywhere against
/// closed forms: `m = 0.01`; `v = 1e-4` for adam and yogi, `0.01` for adagrad.
pub fn adaptive_one_step() -> CheckOutcome {
    timed("adaptive server step hand values", || {
        let expected = [
            (ServerOpt::Adam, 1e-4, 0.005 * 0.01 / (0.01 + 1e-8)),
            (ServerOpt::Adagrad, 0.01, 0.005 * 0.01 / (0.1 + 1e-8)),
            (ServerOpt::Yogi, 1e-4, 0.005 * 0.01 / (0.01 + 1e-8)),
        ];
        let delta = ParamVector::new(vec![0.1; 4])?;
        let mut worst = 0.0f64;
        for (opt_s, v, w) in expected {
            let cfg = ServerConfig { server_lr: 0.005, ..ServerConfig::new(opt_s) };
            let next = server_step(&ServerState::new(ParamVector::zeros(4), false), &delta, &cfg)?;
            for ((mi, vi), wi) in next.m.as_slice().iter().zip(next.v.as_slice()).zip(next.w.as_slice()) {
                worst = worst.max((mi - 0.01).abs()).max((vi - v).abs()).max((wi - w).abs());
            }
        }
        Ok(within(worst, 1e-12))
    })
}

/// `||a||_1` by simulating the momentum recursion on symbolic gradient
/// coefficients: entry `s` of `u` is the weight of the `s`-th gradient.
pub fn unrolled_a_norm(rho: f64, tau: usize) -> f64 {
    let mut u = vec![0.0; tau];
    let mut a = vec![0.0; tau];
    for t in 0..tau {
        for us in u.iter_mut().take(t) {
            *us *= rho;
        }
        u[t] = 1.0;
        for (acc, us) in a.iter_mut().zip(&u) {
            *acc += us;
        }
    }
    a.iter().sum()
}

pub fn a_norm_unroll() -> CheckOutcome {
    timed("nova coefficient norm vs symbolic unroll", || {
        let mut worst = 0.0f64;
        for rho in [0.0, 0.5, 0.9] {
            for tau in 1..=20 {
                worst = worst.max((crate::client::a_norm(rho, tau) - unrolled_a_norm(rho, tau)).abs());
            }
        }
        Ok(within(worst, 1e-12))
    })
}

/// Smallest number of labels covering 90% of a histogram.
pub fn labels_for_90_percent(hist: &[usize]) -> usize {
    let total: usize = hist.iter().sum();
    let mut sorted = hist.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let mut covered = 0;
    for (i, c) in sorted.iter().enumerate() {
        covered += c;
        if 10 * covered >= 9 * total {
            return i + 1;
        }
    }
    sorted.len()
}

/// Total-variation distance between a label histogram and the uniform
/// distribution.
pub fn tv_from_uniform(hist: &[usize]) -> f64 {
    let total: usize = hist.iter().sum();
    let k = hist.len() as f64;
    0.5 * hist.iter().map(|&c| (c as f64 / total as f64 - 1.0 / k).abs()).sum::<f64>()
}

/// Label skew of the Dirichlet partition of a balanced 10-class set over
/// 100 clients: concentrated at `alpha = 0.1`, near-uniform at `alpha = 1e6`.
/// A thousand samples per class keep the integer cut from dominating the
/// near-uniform case.
pub fn dirichlet_skew(seeds: u64) -> CheckOutcome {
    timed(format!("Dirichlet label skew over {seeds} seeds"), || {
        let labels: Vec<usize> = (0..10).flat_map(|k| std::iter::repeat_n(k, 1000)).collect();
        let ds = Dataset::new(vec![0.0; labels.len()], 1, labels, 10)?;
        let (mut worst_median, mut worst_tv) = (0usize, 0.0f64);
        for seed in 0..seeds {
            let skewed = dirichlet_partition(&ds, 100, 0.1, seed)?;
            let mut needed: Vec<usize> =
                skewed.label_histograms(&ds).iter().map(|h| labels_for_90_percent(h)).collect();
            needed.sort_unstable();
            worst_median = worst_median.max(needed[needed.len() / 2]);
            let flat = dirichlet_partition(&ds, 100, 1e6, seed)?;
            for h in flat.label_histograms(&ds) {
                worst_tv = worst_tv.max(tv_from_uniform(&h));
            }
        }
        Ok((
            worst_median <= 3 && worst_tv < 0.1,
            format!("worst per-seed median labels {worst_median} (max 3), worst TV {worst_tv:.4} (max 0.1)"),
        ))
    })
}

/// The quick battery behind the `check` verb.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    vec![
        gradient_check(100, seed),
        centralized_gd(50, seed),
        prox_zero_mu(seed),
        nova_homogeneous(seed),
        scaf_identical_shards(seed),
        sgd_telescoping(seed),
        adaptive_one_step(),
        a_norm_unroll(),
        dirichlet_skew(20),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unroll_matches_small_cases_by_hand() {
        assert_eq!(unrolled_a_norm(0.0, 5), 5.0);
        // tau = 2: a = [1 + rho, 1]
        assert!((unrolled_a_norm(0.5, 2) - 2.5).abs() < 1e-15);
        // tau = 3: a = [1 + rho + rho^2, 1 + rho, 1]
        assert!((unrolled_a_norm(0.5, 3) - 4.25).abs() < 1e-15);
    }

    #[test]
    fn coverage_and_tv_helpers() {
        assert_eq!(labels_for_90_percent(&[90, 10, 0]), 1);
        assert_eq!(labels_for_90_percent(&[50, 40, 10]), 2);
        assert_eq!(tv_from_uniform(&[5, 5]), 0.0);
        assert!((tv_from_uniform(&[10, 0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quick_battery_passes() {
        for outcome in run_all(0) {
            assert!(outcome.passed, "{outcome}");
        }
    }
}
