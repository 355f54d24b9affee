//! Grid sweeps on one worker against the full rayon pool.
//!
//! `cargo bench -p phasefield-core` times both pool sizes with the `parallel`
//! feature; `--no-default-features` times the sequential build, where both
//! groups run the plain loops.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use phasefield_core::anisotropy::Anisotropy;
use phasefield_core::exec;
use phasefield_core::field::{spectral_laplacian, Boundary, Grid, ScalarField};
use phasefield_core::phase_energy::{Evaluator, Input, Quadrature, SetParams};
use phasefield_core::profiles::ProfileParams;
use phasefield_core::recovery::RecoveredSet;
use phasefield_core::sharp_geometry::CurveNetwork;
use std::hint::black_box;

fn pools() -> Vec<(usize, rayon::ThreadPool)> {
    let all = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut sizes = vec![1];
    if all > 1 {
        sizes.push(all);
    }
    sizes
        .into_iter()
        .map(|n| (n, rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()))
        .collect()
}

fn circle_field(n: usize) -> (ScalarField, RecoveredSet) {
    let grid = Grid::square(-2.0, 2.0, n, Boundary::Periodic).unwrap();
    let circle = CurveNetwork::circle([0.0, 0.0], 1.0).unwrap();
    let rec = RecoveredSet::new(&circle, ProfileParams::new(0.05, 2.0).unwrap()).unwrap();
    (rec.field(&grid).unwrap(), rec)
}

fn bench_f_eps(c: &mut Criterion) {
    let phi = Anisotropy::four_fold(2, 0.3).unwrap();
    let params = SetParams::new(0.05, &phi).unwrap();
    let mut g = c.benchmark_group("f_eps");
    for n in [128, 256] {
        let (v, _) = circle_field(n);
        let ev = Evaluator::new(&v.grid, Quadrature::default()).unwrap();
        for (threads, pool) in pools() {
            g.bench_with_input(BenchmarkId::new(format!("threads-{threads}"), n), &n, |b, _| {
                b.iter(|| pool.install(|| ev.f_eps(Input::from(&v), &phi, &params).unwrap()))
            });
        }
    }
    g.finish();
}

fn bench_analytic_subcells(c: &mut Criterion) {
    let phi = Anisotropy::isotropic(2).unwrap();
    let params = SetParams::new(0.05, &phi).unwrap();
    let (v, rec) = circle_field(128);
    let ev = Evaluator::new(&v.grid, Quadrature::subcells(4)).unwrap();
    let mut g = c.benchmark_group("f_eps_analytic_subcells4");
    g.sample_size(10);
    for (threads, pool) in pools() {
        g.bench_function(format!("threads-{threads}"), |b| {
            b.iter(|| pool.install(|| ev.f_eps(Input::Analytic(&rec), &phi, &params).unwrap()))
        });
    }
    g.finish();
}

fn bench_spectral(c: &mut Criterion) {
    let mut g = c.benchmark_group("spectral_laplacian");
    for n in [128, 512] {
        let (v, _) = circle_field(n);
        for (threads, pool) in pools() {
            g.bench_with_input(BenchmarkId::new(format!("threads-{threads}"), n), &n, |b, _| {
                b.iter(|| pool.install(|| spectral_laplacian(black_box(&v)).unwrap()))
            });
        }
    }
    g.finish();
}

fn bench_reduction(c: &mut Criterion) {
    let (v, _) = circle_field(1024);
    let rl = v.grid.row_len();
    let mut g = c.benchmark_group("sum_rows_1024");
    for (threads, pool) in pools() {
        g.bench_function(format!("threads-{threads}"), |b| {
            b.iter(|| {
                pool.install(|| {
                    exec::sum_rows::<2, _>(v.grid.n_rows(), |r| {
                        let row = &v.values[r * rl..(r + 1) * rl];
                        [row.iter().sum(), row.iter().map(|x| x * x).sum()]
                    })
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench_f_eps, bench_analytic_subcells, bench_spectral, bench_reduction);
criterion_main!(benches);
