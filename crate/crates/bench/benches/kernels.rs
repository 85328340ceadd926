use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use std::hint::black_box;

use fedgrid::client::ClientTask;
use fedgrid::data::dirichlet_partition;
use fedgrid::model::{init_params, loss_and_grad};
use fedgrid::{local_train, ClientOpt, ModelSpec, ServerOpt};
use fedgrid_bench::{blobs, desk, mlp_spec};

fn gradients(c: &mut Criterion) {
    let ds = blobs();
    let rows: Vec<usize> = (0..32).collect();
    let batch = ds.batch(&rows).unwrap();
    let mut group = c.benchmark_group("loss_and_grad_b32");
    for (name, spec) in [("logistic", ModelSpec::logistic(ds.dim(), ds.num_classes())), ("mlp32", mlp_spec(&ds))] {
        let w = init_params(&spec, 0);
        group.bench_function(name, |b| b.iter(|| loss_and_grad(&spec, black_box(&w), &batch).unwrap()));
    }
    group.finish();
}

fn client_epoch(c: &mut Criterion) {
    let exp = desk(ClientOpt::Prox, ServerOpt::Sgd, 1);
    let w = init_params(&exp.spec, 0);
    let task =
        ClientTask { spec: &exp.spec, data: &exp.train, shard: exp.partition.shard(0), client: 0, round: 1, seed: 0 };
    c.bench_function("local_train_prox_client0", |b| {
        b.iter(|| local_train(black_box(&w), None, &task, &exp.cfg.client).unwrap())
    });
}

fn rounds(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_round_desk");
    for (opt_c, opt_s) in
        [(ClientOpt::Sgd, ServerOpt::Sgd), (ClientOpt::Scaf, ServerOpt::Adam), (ClientOpt::Nova, ServerOpt::Yogi)]
    {
        for threads in [1, 4] {
            let exp = desk(opt_c, opt_s, threads);
            let id = BenchmarkId::new(format!("{opt_c}-{opt_s}"), threads);
            group.bench_function(id, |b| {
                b.iter_batched(
                    || exp.initial_state(),
                    |mut state| exp.run_round(&mut state, 1).unwrap(),
                    BatchSize::SmallInput,
                )
            });
        }
    }
    group.finish();
}

fn partitioning(c: &mut Criterion) {
    let ds = blobs();
    let mut group = c.benchmark_group("dirichlet_partition");
    for clients in [20, 100] {
        group.bench_with_input(BenchmarkId::from_parameter(clients), &clients, |b, &n| {
            b.iter(|| dirichlet_partition(&ds, n, 0.1, 0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gradients, client_epoch, rounds, partitioning);
criterion_main!(benches);
