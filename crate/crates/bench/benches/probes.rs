use std::hint::black_box;

use biaslab_core::experiments::{feldman_complexity_probe, FullCube};
use biaslab_core::stats::{be_empirical_check, exit_time_empirical};
use criterion::{criterion_group, criterion_main, Criterion};

fn probes(c: &mut Criterion) {
    let mut g = c.benchmark_group("probes");
    g.sample_size(10);
    g.bench_function("feldman exact d=12", |b| {
        b.iter(|| feldman_complexity_probe(&FullCube(12), 2, 1_000, black_box(1), true).unwrap())
    });
    g.bench_function("berry-esseen 1e3 trials", |b| {
        b.iter(|| be_empirical_check(1.0, 4, 1.0, 1_000, 1_000, black_box(2)).unwrap())
    });
    g.bench_function("exit time 1e3 trials", |b| {
        b.iter(|| exit_time_empirical(200.0, 1.0, 1_000, 1_000, black_box(3)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, probes);
criterion_main!(benches);
