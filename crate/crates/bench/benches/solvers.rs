use std::hint::black_box;

use blockgth::augment::{self, Depth};
use blockgth::{gth, mg1, rgfact};
use blockgth_bench::{banded_chain, random_mg1, vacation_spec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn dense_solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("dense");
    for levels in [20, 60] {
        let p = banded_chain(7, levels);
        group.bench_with_input(BenchmarkId::new("gth", levels), &p, |b, p| {
            b.iter(|| gth::solve(black_box(p)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("rg", levels), &p, |b, p| {
            b.iter(|| rgfact::solve_by_factors(&rgfact::factorize(black_box(p)).unwrap()).unwrap())
        });
    }
    group.finish();
}

fn structured_solvers(c: &mut Criterion) {
    let spec = vacation_spec(100_000);
    let mut group = c.benchmark_group("structured");
    group.sample_size(10);
    for n in [100, 500] {
        let t = augment::natural_lbca_truncation(&spec, n).unwrap();
        group.bench_with_input(BenchmarkId::new("hessenberg_gth", n), &t, |b, t| {
            b.iter(|| gth::solve_upper_hessenberg(black_box(t)).unwrap())
        });
    }
    group.bench_function("racm_n50_m100", |b| {
        b.iter(|| augment::racm_truncation(black_box(&spec), 50, Depth::Fixed(100)).unwrap())
    });
    group.finish();
}

fn series(c: &mut Criterion) {
    let spec = random_mg1(3);
    c.bench_function("g_columns_depth_200", |b| {
        b.iter(|| mg1::g_columns(black_box(&spec), 200))
    });
}

criterion_group!(benches, dense_solvers, structured_solvers, series);
criterion_main!(benches);
