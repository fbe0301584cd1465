//! Serial vs parallel throughput of the batch-level hot paths: trajectory
//! simulation and the taped loss-plus-gradient evaluation.
//!
//! Run with `cargo bench -p sbs-core`. The parallel variants use the rayon
//! pool (default `parallel` feature); the serial variants always iterate in
//! order. Outputs are bit-identical between the two, so this suite measures
//! pure scheduling overhead and speedup.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::sync::Arc;

use sbs_core::nn::Activation;
use sbs_core::policy::{Policy, PolicyArch, DEFAULT_SCORE_CLIP};
use sbs_core::rng::Stream;
use sbs_core::sde::{simulate_batch, simulate_batch_serial, SdeConfig};
use sbs_core::targets::funnel_target;
use sbs_core::trainer::loss_grad_batch;

fn bench_arch() -> PolicyArch {
    PolicyArch {
        n_freq: 32,
        t_hidden: 64,
        x_hidden: 64,
        merge_hidden: 64,
        activation: Activation::Tanh,
        per_coord_scale: false,
    }
}

fn simulate_batch_bench(c: &mut Criterion) {
    let target = Arc::new(funnel_target());
    let config = SdeConfig::new(10, 1.0, 100, 7).unwrap();
    let policy = Policy::grad(target, 1.0, bench_arch(), DEFAULT_SCORE_CLIP, 7);
    let stream = Stream::root(7, "bench-sim");

    let mut group = c.benchmark_group("simulate_batch");
    for batch in [64usize, 256] {
        group.bench_with_input(BenchmarkId::new("parallel", batch), &batch, |b, &n| {
            b.iter(|| simulate_batch(&policy, &config, n, stream).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("serial", batch), &batch, |b, &n| {
            b.iter(|| simulate_batch_serial(&policy, &config, n, stream).unwrap())
        });
    }
    group.finish();
}

fn loss_grad_bench(c: &mut Criterion) {
    let target = Arc::new(funnel_target());
    let config = SdeConfig::new(10, 1.0, 100, 7).unwrap();
    let policy = Policy::grad(target.clone(), 1.0, bench_arch(), DEFAULT_SCORE_CLIP, 7);
    let stream = Stream::root(7, "bench-grad");

    let mut group = c.benchmark_group("loss_grad_batch");
    group.sample_size(10);
    for batch in [32usize, 128] {
        group.bench_with_input(BenchmarkId::new("parallel", batch), &batch, |b, &n| {
            b.iter(|| loss_grad_batch(&policy, target.as_ref(), &config, n, stream, false).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("serial", batch), &batch, |b, &n| {
            b.iter(|| loss_grad_batch(&policy, target.as_ref(), &config, n, stream, true).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, simulate_batch_bench, loss_grad_bench);
criterion_main!(benches);
