//! One worker versus the default pool on the two hot paths: Monte Carlo
//! local-time moments and the deterministic second-moment quadrature.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fraclt::cov_kernels::ProcessKind;
use fraclt::frac_calc::{MultiIndex, Sign};
use fraclt::gp_sim::{PathSampler, TimeGrid};
use fraclt::local_time::lt_moments;
use fraclt::moment_engine::second_moment;
use fraclt::par::with_workers;
use std::hint::black_box;

fn pools() -> [(&'static str, Option<usize>); 2] {
    [("1-thread", Some(1)), ("default", None)]
}

fn monte_carlo(c: &mut Criterion) {
    let grid = TimeGrid::uniform(1.0, 1024).unwrap();
    let src = PathSampler::circulant(0.3, grid, 1, 256, 3).unwrap();
    let alpha = MultiIndex::new(vec![0.5]).unwrap();
    let mut g = c.benchmark_group("lt_moments");
    g.sample_size(10);
    for (label, workers) in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(label), &workers, |b, &w| {
            b.iter(|| with_workers(w, || black_box(lt_moments(&src, &alpha, Sign::Plus, &[0.0], 1.0, &[0.05]).unwrap())))
        });
    }
    g.finish();
}

fn quadrature(c: &mut Criterion) {
    let kind = ProcessKind::fbm(0.4).unwrap();
    let alpha = MultiIndex::new(vec![0.5]).unwrap();
    let mut g = c.benchmark_group("second_moment");
    g.sample_size(10);
    for (label, workers) in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(label), &workers, |b, &w| {
            b.iter(|| with_workers(w, || black_box(second_moment(&alpha, &[0.3], 1.0, 0.05, &kind, Sign::Plus).unwrap())))
        });
    }
    g.finish();
}

criterion_group!(benches, monte_carlo, quadrature);
criterion_main!(benches);
