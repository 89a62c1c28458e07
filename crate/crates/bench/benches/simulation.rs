use std::hint::black_box;

use brachio_core::dynamics::state_derivative;
use brachio_core::scenario::run;
use brachio_core::trace::Trace;
use brachio_core::{RobotParams, ScenarioConfig, SliderOffset, State};
use criterion::{criterion_group, criterion_main, Criterion};

fn dynamics(c: &mut Criterion) {
    let p = RobotParams::nominal().with_offset(SliderOffset::Minus);
    let x = State::new(0.7, 1.1, -2.0, 12.0);
    c.bench_function("state_derivative", |b| b.iter(|| state_derivative(black_box(&x), black_box(1.3), &p)));
}

fn scenarios(c: &mut Criterion) {
    let mut group = c.benchmark_group("scenario");
    group.sample_size(10);
    let limit = ScenarioConfig::reference_limit_case();
    group.bench_function("limit_case", |b| b.iter(|| run(black_box(&limit)).unwrap()));
    let cont = ScenarioConfig::reference_continuous();
    group.bench_function("continuous", |b| b.iter(|| run(black_box(&cont)).unwrap()));
    group.finish();
}

fn trace_io(c: &mut Criterion) {
    let out = run(&ScenarioConfig::reference_limit_case()).unwrap();
    let trace = Trace::from_samples(&out.trajectory);
    let text = trace.to_csv_string();
    let mut group = c.benchmark_group("trace");
    group.sample_size(10);
    group.bench_function("write", |b| b.iter(|| black_box(&trace).to_csv_string()));
    group.bench_function("read", |b| b.iter(|| Trace::read(black_box(text.as_bytes())).unwrap()));
    group.finish();
}

criterion_group!(benches, dynamics, scenarios, trace_io);
criterion_main!(benches);
