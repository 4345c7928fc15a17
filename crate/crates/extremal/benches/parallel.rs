//! Parallel vs single-threaded timing of the batch entry points.
//!
//! The library's batch computations run on rayon's global pool; pinning a
//! one-thread pool around the same calls measures the sequential path, so
//! both sides of the `parallel` feature can be compared from one build.

use criterion::{criterion_group, criterion_main, Criterion};

use extremal::imt::imt_grid;
use extremal::kgaps::bootstrap_ci;
use extremal::series::exceedances;
use extremal::simulate::{ar2_pareto, benchmark, BenchConfig, BenchEstimator, BenchProcess};

fn single_thread_pool() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("pool")
}

fn bench_imt_grid(c: &mut Criterion) {
    let series = ar2_pareto(8000, 0.95, -0.89, 2.0, 42).unwrap();
    let p_grid: Vec<f64> = (0..10).map(|i| 0.95 + 0.005 * i as f64).collect();
    let k_grid: Vec<u64> = (1..=12).collect();

    let mut group = c.benchmark_group("imt_grid_10x12");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| imt_grid(&series, &p_grid, &k_grid).unwrap())
    });
    let pool = single_thread_pool();
    group.bench_function("single_thread", |b| {
        b.iter(|| pool.install(|| imt_grid(&series, &p_grid, &k_grid).unwrap()))
    });
    group.finish();
}

fn bench_bootstrap(c: &mut Criterion) {
    let series = ar2_pareto(8000, 0.95, -0.89, 2.0, 7).unwrap();
    let u = extremal::series::empirical_quantile(&series, 0.98).unwrap();
    let record = exceedances(&series, u).unwrap();

    let mut group = c.benchmark_group("bootstrap_ci_b500");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| bootstrap_ci(&record, 6, 500, 0.95, 1).unwrap())
    });
    let pool = single_thread_pool();
    group.bench_function("single_thread", |b| {
        b.iter(|| pool.install(|| bootstrap_ci(&record, 6, 500, 0.95, 1).unwrap()))
    });
    group.finish();
}

fn bench_benchmark_harness(c: &mut Criterion) {
    let cfg = BenchConfig {
        processes: vec![(BenchProcess::Ar1Cauchy, 1)],
        estimators: vec![BenchEstimator::KgapsMle, BenchEstimator::Intervals],
        reps: 50,
        n: 2000,
        p_grid: vec![0.95, 0.97, 0.99],
        seed: 3,
    };
    let mut group = c.benchmark_group("benchmark_ar1_50reps");
    group.sample_size(10);
    group.bench_function("parallel", |b| b.iter(|| benchmark(&cfg).unwrap()));
    let pool = single_thread_pool();
    group.bench_function("single_thread", |b| {
        b.iter(|| pool.install(|| benchmark(&cfg).unwrap()))
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_imt_grid,
    bench_bootstrap,
    bench_benchmark_harness
);
criterion_main!(benches);
