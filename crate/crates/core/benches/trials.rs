use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sparsejl::jl::{verify_jlt_with, JlOptions, VectorFamily};
use sparsejl::spectra::{baiyin_experiment, EnsembleChoice, ExperimentOptions, SchedulePoint};
use sparsejl::{EnsembleParams, Execution};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn jl_trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("jl_trials");
    let params = EnsembleParams::hashing_like(64, 4096, 8.0);
    for (name, exec) in MODES {
        let opts = JlOptions { exec, keep_ratios: false };
        group.bench_with_input(BenchmarkId::new(name, 256), &opts, |b, opts| {
            b.iter(|| verify_jlt_with(params, 0.25, 256, &VectorFamily::GaussianUnit, black_box(1), opts).unwrap())
        });
    }
    group.finish();
}

fn spectral_trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral_trials");
    group.sample_size(10);
    let point = [SchedulePoint { big_n: 10_000, n: 100, s: 20.0 }];
    for (name, exec) in MODES {
        let opts = ExperimentOptions { exec, ..Default::default() };
        group.bench_with_input(BenchmarkId::new(name, 16), &opts, |b, opts| {
            b.iter(|| baiyin_experiment(&point, 16, black_box(2), EnsembleChoice::hashing_like(), opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, jl_trials, spectral_trials);
criterion_main!(benches);
