use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sde_lab_core::model::{GeneralModel, ModelParams};
use sde_lab_core::montecarlo::MonteCarlo;
use sde_lab_core::paths::{sample_brownian, TimeGrid};
use sde_lab_core::solvers::{solve_cascade, solve_em, solve_general_cascade, solve_variation, EulerScheme, Solver};

fn single_path(c: &mut Criterion) {
    let model = GeneralModel::from_params(ModelParams::default()).unwrap();
    let grid = TimeGrid::new(1.0, 2048).unwrap();
    let w = sample_brownian(grid, 1, 1, 0).unwrap();
    let x0 = [0.0, 0.0, 0.0, 0.05, 0.0];

    let mut group = c.benchmark_group("single_path");
    group.bench_function("cascade", |b| b.iter(|| solve_cascade(model.base(), black_box(&w), &x0).unwrap()));
    group.bench_function("cascade_general", |b| {
        b.iter(|| solve_general_cascade(&model, black_box(&w), &x0).unwrap())
    });
    group.bench_function("em_tamed", |b| {
        b.iter(|| solve_em(&model, black_box(&w), &x0, EulerScheme::Tamed).unwrap())
    });
    group.bench_function("em_explicit", |b| {
        b.iter(|| solve_em(&model, black_box(&w), &x0, EulerScheme::Explicit).unwrap())
    });
    let x_path = solve_general_cascade(&model, &w, &x0).unwrap();
    group.bench_function("variation", |b| {
        b.iter(|| solve_variation(&model, black_box(&x_path), &[0.0, 0.0, 0.0, 1.0, 0.0]).unwrap())
    });
    group.finish();
}

fn brownian(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_brownian");
    for steps in [1024usize, 4096] {
        let grid = TimeGrid::new(1.0, steps).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(steps), &grid, |b, g| {
            b.iter(|| sample_brownian(*g, 1, 7, black_box(3)).unwrap())
        });
    }
    group.finish();
}

fn distance(c: &mut Criterion) {
    let model = GeneralModel::from_params(ModelParams::default()).unwrap();
    let mc = MonteCarlo::new(1.0 / 512.0, Solver::Cascade).unwrap();
    let y = [0.0, 0.0, 0.0, 0.05, 0.0];
    let mut group = c.benchmark_group("estimate_distance");
    group.sample_size(10);
    group.bench_function("cascade_256_paths", |b| {
        b.iter(|| mc.estimate_distance(&model, &[0.0; 5], &y, 0.9, 256, black_box(5)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, single_path, brownian, distance);
criterion_main!(benches);
