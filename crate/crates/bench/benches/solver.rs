use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use epmac_bench::{case_state, potential_system};
use epmac_core::ap::step;
use epmac_core::classical::{step_classical, ClassicalConfig, CollocatedState};
use epmac_core::elliptic::{solve, SolverConfig};
use epmac_core::ApConfig;
use std::hint::black_box;

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assemble");
    for n in [50, 100, 200] {
        let (mesh, state) = case_state("column2d", n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| potential_system(&mesh, black_box(&state), 2e-4))
        });
    }
    group.finish();
}

fn elliptic_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("pcg");
    group.sample_size(20);
    for n in [50, 100, 200] {
        let (mesh, state) = case_state("column2d", n);
        let system = potential_system(&mesh, &state, 2e-4);
        let config = SolverConfig::default();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve(&mesh, black_box(&system), &config, None).expect("converges"))
        });
    }
    group.finish();
}

fn time_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    group.sample_size(20);
    let config = ApConfig::default();
    for (case, n) in [("qn1d", 1000), ("column2d", 100)] {
        let (mesh, state) = case_state(case, n);
        group.bench_function(format!("ap/{case}/{n}"), |b| {
            b.iter(|| step(&mesh, black_box(&state), &config, f64::INFINITY).expect("step"))
        });
        let col = CollocatedState::from_staggered(&mesh, &state);
        let cl = ClassicalConfig::default();
        group.bench_function(format!("classical/{case}/{n}"), |b| {
            b.iter(|| step_classical(&mesh, black_box(&col), &cl, f64::INFINITY).expect("step"))
        });
    }
    group.finish();
}

criterion_group!(benches, assembly, elliptic_solve, time_steps);
criterion_main!(benches);
