use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lassodf::dataset::{diabetes, expand_quadratic, standardize};
use lassodf::mc::{conjecture_bias_report, estimate_df_mc, MonteCarloSettings, SyntheticModel};
use lassodf::parallel::Execution;

fn model(quadratic: bool) -> SyntheticModel {
    let mut raw = diabetes();
    if quadratic {
        raw = expand_quadratic(&raw, true).unwrap();
    }
    SyntheticModel::from_ols(&standardize(&raw).unwrap(), 1.0).unwrap()
}

fn df_curve(c: &mut Criterion) {
    let m = model(false);
    let grid: Vec<f64> = (0..40).map(|i| 50.0 * i as f64).collect();
    let mut group = c.benchmark_group("df_mc_diabetes10");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::new(name, 500), &exec, |b, &exec| {
            let settings = MonteCarloSettings::new(500, 1).with_execution(exec);
            b.iter(|| black_box(estimate_df_mc(&m, &grid, &settings).unwrap()))
        });
    }
    group.finish();
}

fn last_step_bias(c: &mut Criterion) {
    let m = model(true);
    let mut group = c.benchmark_group("last_step_bias_diabetes64");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::new(name, 200), &exec, |b, &exec| {
            let settings = MonteCarloSettings::new(200, 1).with_execution(exec);
            b.iter(|| black_box(conjecture_bias_report(&m, &settings).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, df_curve, last_step_bias);
criterion_main!(benches);
