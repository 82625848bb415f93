use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use maxent_bench::{reference_scheme, square_grid};
use maxent_core::{
    optimal_control_field, simulate_paths, solve_forward_density, solve_hjb, solve_log_diffusion, ConstantControl,
    LadderConfig, SimConfig, VolatilityModel,
};

fn hjb(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_hjb");
    group.sample_size(10);
    let cfg = reference_scheme();
    for size in [200, 1000] {
        let grid = square_grid(size);
        group.bench_with_input(BenchmarkId::from_parameter(size), &grid, |b, g| {
            b.iter(|| solve_hjb(black_box(g), &cfg).unwrap())
        });
    }
    group.finish();
}

fn log_diffusion(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_log_diffusion");
    group.sample_size(10);
    let grid = square_grid(200);
    for n in [1, 4] {
        let cfg = LadderConfig { regularisation_n: n, ..LadderConfig::default() };
        group.bench_with_input(BenchmarkId::from_parameter(n), &cfg, |b, cfg| {
            b.iter(|| solve_log_diffusion(black_box(&grid), cfg).unwrap())
        });
    }
    group.finish();
}

fn density(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_forward_density");
    group.sample_size(10);
    let grid = square_grid(200);
    let cfg = reference_scheme();
    let control = optimal_control_field(&solve_hjb(&grid, &cfg).unwrap(), &cfg);
    group.bench_function("early_termination", |b| {
        b.iter(|| solve_forward_density(VolatilityModel::EarlyTermination(&control), &grid, 0.5).unwrap())
    });
    group.bench_function("full_length", |b| {
        b.iter(|| solve_forward_density(VolatilityModel::FullLength { horizon: 1.0 }, &grid, 0.5).unwrap())
    });
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_paths");
    group.sample_size(10);
    let sim = SimConfig { n_paths: 2000, dt: 1e-2, ..SimConfig::default() };
    let unit = ConstantControl { a: 1.0, horizon: 1.0 };
    group.bench_function("constant_2000", |b| b.iter(|| simulate_paths(&unit, black_box(&sim)).unwrap()));
    group.finish();
}

criterion_group!(benches, hjb, log_diffusion, density, monte_carlo);
criterion_main!(benches);
