//! Benchmarks for the two hot paths: the per-diamond Newton solve that
//! dominates every run, and the full executor comparing the serial driver
//! against the strip-decomposed parallel one at several worker counts.
//!
//! Run with `cargo bench -p diamond-core`.  On a single-CPU host the
//! executor group shows the thread-coordination overhead rather than a
//! speedup; on a multi-core host the same group measures strong scaling.

use std::sync::Arc;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use diamond_core::init::init_diamond;
use diamond_core::problems::{sample_problem, wave_system};
use diamond_core::{
    gauss_tableau, run_parallel, BoundarySpec, InitKind, MeshConfig, Simulation, SolverConfig,
    Stepper,
};

/// One zig-zag row advanced by a half-step: `N` diamond solves.
fn bench_half_step(c: &mut Criterion) {
    let problem = sample_problem("SineGordon").unwrap();
    let pde = Arc::new(wave_system(&problem).unwrap());
    let mesh = MeshConfig::with_courant(problem.a, problem.b, 100, 0.5).unwrap();
    let cfg = SolverConfig::default();

    let mut group = c.benchmark_group("half_step_row_of_100");
    for r in [1usize, 2, 3, 5] {
        let tab = gauss_tableau(r).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(r), &r, |b, _| {
            let init = init_diamond(&pde, mesh, &tab, &cfg).unwrap();
            let mut stepper =
                Stepper::new(Arc::clone(&pde), &tab, mesh, BoundarySpec::periodic(), cfg).unwrap();
            let mut state = init.clone();
            b.iter(|| {
                stepper.half_step(&mut state).unwrap();
                // Periodically rewind so the benchmark cannot drift into a
                // regime with different Newton iteration counts.
                if state.row_time > 20.0 * mesh.dt {
                    state = init.clone();
                }
            });
        });
    }
    group.finish();
}

/// Whole short runs through the serial driver and the parallel executor.
fn bench_executor(c: &mut Criterion) {
    let problem = sample_problem("SineGordon").unwrap();
    let mesh = MeshConfig::with_dt(problem.a, problem.b, 400, 0.05).unwrap();
    let sim = Simulation::new(problem, 3, mesh, 1.0).with_init(InitKind::Diamond);

    let mut group = c.benchmark_group("executor_400x20");
    group.sample_size(10).measurement_time(Duration::from_secs(8));
    group.bench_function("serial", |b| b.iter(|| sim.run().unwrap()));
    for workers in [1usize, 2, 4] {
        group.bench_with_input(
            BenchmarkId::new("parallel", workers),
            &workers,
            |b, &w| b.iter(|| run_parallel(&sim, w).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_half_step, bench_executor);
criterion_main!(benches);
