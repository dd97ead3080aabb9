use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use glued_cli::pipeline::{observer_run, resolve, tracking_run};
use glued_cli::{Mode, ScenarioConfig};
use glued_core::analysis::estimate_dwell_function;
use glued_core::hybrid::simulate_hybrid;
use glued_core::models::Registry;
use glued_core::sets::Projector;
use glued_core::{SimParams, Vector, ZeroInput};

fn simulation(c: &mut Criterion) {
    let ball = Registry::builtin().build("bouncing_ball", &BTreeMap::new()).unwrap();
    let x0 = Vector::from_vec(vec![2.0, -3.0]);
    c.bench_function("ball_simulate_16s", |b| {
        b.iter(|| simulate_hybrid(&ball.sys, black_box(&x0), &ZeroInput(0), &SimParams::with_horizon(16.0)).unwrap())
    });
}

fn projection(c: &mut Criterion) {
    let rdi = Registry::builtin().build("reflected_di", &BTreeMap::new()).unwrap();
    let proj = Projector::euclidean(rdi.sampler.jump.clone());
    let target = Vector::from_vec(vec![0.3; rdi.sys.n]);
    c.bench_function("rdi_jump_set_projection", |b| b.iter(|| proj.project(black_box(&target))));
}

fn dwell(c: &mut Criterion) {
    let ball = Registry::builtin().build("bouncing_ball", &BTreeMap::new()).unwrap();
    let exec = simulate_hybrid(&ball.sys, &Vector::from_vec(vec![2.0, -3.0]), &ZeroInput(0), &SimParams::with_horizon(16.0)).unwrap();
    let runs = [exec];
    let grid = [0.01, 0.02, 0.05, 0.1, 0.2, 0.3];
    c.bench_function("ball_dwell_estimate", |b| {
        b.iter(|| estimate_dwell_function(&ball.sys, &ball.sampler.jump, black_box(&runs), &grid).unwrap())
    });
}

fn closed_loops(c: &mut Criterion) {
    let reg = Registry::builtin();
    let mut group = c.benchmark_group("closed_loop");
    group.sample_size(10);

    let ball = reg.build("bouncing_ball", &BTreeMap::new()).unwrap();
    let cfg = ScenarioConfig::new("bouncing_ball", Mode::Estimate);
    let resolved = resolve(&cfg, &ball).unwrap();
    group.bench_function("ball_observer", |b| b.iter(|| observer_run(&ball, &resolved).unwrap()));

    let rdi = reg.build("reflected_di", &BTreeMap::new()).unwrap();
    let cfg = ScenarioConfig::new("reflected_di", Mode::Track);
    let resolved = resolve(&cfg, &rdi).unwrap();
    group.bench_function("rdi_tracking", |b| b.iter(|| tracking_run(&rdi, &resolved).unwrap()));
    group.finish();
}

criterion_group!(benches, simulation, projection, dwell, closed_loops);
criterion_main!(benches);
