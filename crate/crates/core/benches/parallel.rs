//! Single-thread pool against the default pool on the hot paths: the
//! spectral Laplacian, a short τ-frame run, and the barrier scan.

use std::f64::consts::TAU;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pscurv::diagnostics::ab_check;
use pscurv::{evolve, EvolveOptions, Frame, Sampling, SourceTerm, TorusGrid};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        (
            "sequential",
            rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
        ),
        ("parallel", rayon::ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn laplacian(c: &mut Criterion) {
    let mut group = c.benchmark_group("laplacian");
    for n in [64usize, 256] {
        let g = TorusGrid::new(2, n, TAU).unwrap();
        let v = g.field_from_fn(|x| 1.0 + 0.3 * x[0].cos() * x[1].sin());
        for (name, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(name, n), &v, |b, v| {
                b.iter(|| pool.install(|| v.laplacian()))
            });
        }
    }
    group.finish();
}

fn tau_run(c: &mut Criterion) {
    let g = TorusGrid::new(2, 32, TAU).unwrap();
    let v0 = g.field_from_fn(|x| 1.0 + 0.05 * x[0].cos());
    let f = SourceTerm::constant(0.5).unwrap();
    let frame = Frame::tau_frame(3, 1.0).unwrap();
    let opts = EvolveOptions {
        sampling: Sampling {
            interval: Some(0.1),
            ..Sampling::default()
        },
        ..EvolveOptions::default()
    };
    let traj = evolve(&v0, &frame, &f, 1.0, &opts).unwrap();
    let mut group = c.benchmark_group("tau_run");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("evolve", name), |b| {
            b.iter(|| pool.install(|| evolve(&v0, &frame, &f, 0.2, &opts).unwrap()))
        });
        group.bench_function(BenchmarkId::new("ab_check", name), |b| {
            b.iter(|| pool.install(|| ab_check(&traj).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, laplacian, tau_run);
criterion_main!(benches);
