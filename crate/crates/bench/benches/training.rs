use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use hiermem::model::{infer, ForwardOptions, ModelParams, ModelShape};
use hiermem::numerics::Tape;
use hiermem::trainer::{batch_loss, prepare_batch, walk_contexts, Trainer};
use hiermem_bench::synthetic_workload;

fn batch_prep(c: &mut Criterion) {
    let (g, config) = synthetic_workload();
    let contexts = walk_contexts(&g, &config, 0).unwrap();
    let targets: Vec<usize> = (0..config.batch_size).collect();
    c.bench_function("prepare_batch/50", |b| {
        b.iter(|| prepare_batch(&g, &config, &contexts, black_box(&targets), None, 7, true).unwrap())
    });
}

fn forward_backward(c: &mut Criterion) {
    let (g, config) = synthetic_workload();
    let contexts = walk_contexts(&g, &config, 0).unwrap();
    let targets: Vec<usize> = (0..config.batch_size).collect();
    let batch = prepare_batch(&g, &config, &contexts, &targets, None, 7, true).unwrap();
    let params = ModelParams::init(&ModelShape::new(&config, &g), 0);
    let options = ForwardOptions::from_config(&config, config.tau);
    c.bench_function("forward_backward/50", |b| {
        b.iter(|| {
            let mut t = Tape::new();
            let vars = params.register(&mut t, true);
            let (loss, _, _) = batch_loss(&mut t, &g, &vars, &config, &batch, options, 0.0).unwrap();
            black_box(t.backward(loss).unwrap())
        })
    });
}

fn epoch(c: &mut Criterion) {
    let (g, config) = synthetic_workload();
    let mut group = c.benchmark_group("epoch");
    group.sample_size(10);
    group.bench_function("synthetic/200", |b| {
        b.iter(|| {
            let mut tr = Trainer::new(config.clone(), &g, None).unwrap();
            black_box(tr.step_epoch().unwrap())
        })
    });
    group.finish();
}

fn inference(c: &mut Criterion) {
    let (g, config) = synthetic_workload();
    let params = ModelParams::init(&ModelShape::new(&config, &g), 0);
    let mut group = c.benchmark_group("infer");
    group.sample_size(20);
    group.bench_function("synthetic/200", |b| b.iter(|| infer(&params, &config, &g, 0, config.tau).unwrap()));
    group.finish();
}

criterion_group!(benches, batch_prep, forward_backward, epoch, inference);
criterion_main!(benches);
