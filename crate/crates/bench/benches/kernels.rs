use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dbnmf_core::minvol::{admm_solve_w, AdmmProblem};
use dbnmf_core::synthetic::{hyperspectral_mixture, uniform_matrix};
use dbnmf_core::updates::{update_h_simplex, update_w_inner, InnerWContext};
use dbnmf_core::{deep_factorize, BetaValue, DenseMatrix, SolverConfig};
use std::hint::black_box;

fn row_simplex(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut h = uniform_matrix(rows, cols, seed);
    h.normalize_rows();
    h
}

fn h_simplex(c: &mut Criterion) {
    let w = uniform_matrix(200, 20, 1);
    let h = row_simplex(20, 100, 2);
    let y = uniform_matrix(200, 100, 3);
    let mut group = c.benchmark_group("h_simplex_200x100_r20");
    for beta in BetaValue::ALL {
        group.bench_with_input(BenchmarkId::from_parameter(beta), &beta, |b, &beta| {
            b.iter(|| update_h_simplex(black_box(&w), black_box(&y), black_box(&h), beta).unwrap())
        });
    }
    group.finish();
}

fn w_inner(c: &mut Criterion) {
    let y = uniform_matrix(200, 100, 4);
    let w = uniform_matrix(200, 20, 5);
    let h = uniform_matrix(20, 100, 6);
    let w_bar = uniform_matrix(200, 20, 7);
    let ctx = InnerWContext::new(&y, &w, &h, &w_bar, 0.5).unwrap();
    let mut group = c.benchmark_group("w_inner_200x100_r20");
    for beta in [BetaValue::Zero, BetaValue::Half, BetaValue::One, BetaValue::ThreeHalves] {
        group.bench_with_input(BenchmarkId::from_parameter(beta), &beta, |b, &beta| {
            b.iter(|| update_w_inner(black_box(&ctx), beta).unwrap())
        });
    }
    group.finish();
}

fn admm(c: &mut Criterion) {
    let hsi = hyperspectral_mixture(20, 20, 20, 3, 0.5, 1).unwrap();
    let mut w = uniform_matrix(20, 3, 8);
    w.normalize_cols();
    let h = uniform_matrix(3, 400, 9);
    let w_bar = w.clone();
    let problem = AdmmProblem {
        y: &hsi.x,
        w_tilde: &w,
        h: &h,
        w_bar: &w_bar,
        lambda_ratio: 0.5,
        alpha_ratio: 0.1,
        delta: 0.1,
    };
    c.bench_function("admm_w_20x400_r3", |b| {
        b.iter(|| admm_solve_w(black_box(&problem), 100.0, 50, 1e-6, 1e-16).unwrap())
    });
}

fn deep_run(c: &mut Criterion) {
    let x = uniform_matrix(100, 60, 10);
    let mut config = SolverConfig::new(BetaValue::One, &[10, 5]);
    config.max_sweeps = 20;
    config.warm_start_sweeps = 20;
    let mut group = c.benchmark_group("deep_kl_100x60");
    group.sample_size(10);
    for threads in [1, 4] {
        config.threads = threads;
        group.bench_with_input(BenchmarkId::new("threads", threads), &config, |b, cfg| {
            b.iter(|| deep_factorize(black_box(&x), cfg, None).unwrap())
        });
    }
    group.finish();
}

criterion_group!(kernels, h_simplex, w_inner, admm, deep_run);
criterion_main!(kernels);
