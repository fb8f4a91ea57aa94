use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{dvector, DMatrix};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use sls_regret::evaluation::{rollout, sample_noise, NoiseKind, NoiseModel};
use sls_regret::ltv::{build_cost, build_synthetic_system, lift, uniform_box_bounds, SafetySpec};
use sls_regret::sls::{gains_from_response, response_from_gains, ControlGains};
use sls_regret::synthesis::{solve_clairvoyant, solve_regret_optimal, solve_safe_h2};
use sls_regret::Dims;

fn random_gains(dims: Dims, rng: &mut ChaCha8Rng) -> ControlGains {
    let mut k = DMatrix::zeros(dims.input_total(), dims.meas_total());
    for t in 0..dims.horizon {
        for s in 0..=t {
            for i in 0..dims.input {
                for j in 0..dims.meas {
                    k[(t * dims.input + i, s * dims.meas + j)] = rng.random::<f64>() - 0.5;
                }
            }
        }
    }
    ControlGains::new(k, dims).unwrap()
}

fn bench_response_algebra(c: &mut Criterion) {
    let sys = build_synthetic_system(0.85, 10).unwrap();
    let lifted = lift(&sys);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gains = random_gains(lifted.dims(), &mut rng);
    c.bench_function("lift_T10", |b| b.iter(|| lift(&sys)));
    c.bench_function("response_from_gains_T10", |b| {
        b.iter(|| response_from_gains(&lifted, &gains))
    });
    let phi = response_from_gains(&lifted, &gains);
    c.bench_function("gains_from_response_T10", |b| {
        b.iter(|| gains_from_response(&phi).unwrap())
    });
}

fn bench_rollout(c: &mut Criterion) {
    let sys = build_synthetic_system(0.85, 10).unwrap();
    let lifted = lift(&sys);
    let dims = lifted.dims();
    let cost = build_cost(&DMatrix::identity(3, 3), &DMatrix::identity(2, 2), dims).unwrap();
    let safety =
        SafetySpec::state_input_box(&dvector![5.0, 5.0, 5.0], &dvector![5.0, 5.0], dims).unwrap();
    let bounds = uniform_box_bounds(1.0, 1.0, dims).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let gains = random_gains(dims, &mut rng);
    let noise = sample_noise(&NoiseModel::new(NoiseKind::Uniform, 3), &bounds).unwrap();
    c.bench_function("rollout_T10", |b| {
        b.iter(|| rollout(&sys, &gains, &noise, &safety, &cost).unwrap())
    });
}

fn bench_synthesis(c: &mut Criterion) {
    let mut group = c.benchmark_group("synthesis");
    group.sample_size(10);
    for horizon in [4usize, 6, 8] {
        let sys = build_synthetic_system(0.85, horizon).unwrap();
        let lifted = lift(&sys);
        let dims = lifted.dims();
        let cost = build_cost(&DMatrix::identity(3, 3), &DMatrix::identity(2, 2), dims).unwrap();
        let safety =
            SafetySpec::state_input_box(&dvector![5.0, 5.0, 5.0], &dvector![5.0, 5.0], dims)
                .unwrap();
        let bounds = uniform_box_bounds(1.0, 1.0, dims).unwrap();
        group.bench_function(BenchmarkId::new("clairvoyant", horizon), |b| {
            b.iter(|| solve_clairvoyant(&lifted, &cost).unwrap())
        });
        group.bench_function(BenchmarkId::new("regret", horizon), |b| {
            b.iter(|| solve_regret_optimal(&lifted, &cost, &safety, &bounds).unwrap())
        });
        group.bench_function(BenchmarkId::new("h2", horizon), |b| {
            b.iter(|| solve_safe_h2(&lifted, &cost, &safety, &bounds).unwrap())
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_response_algebra,
    bench_rollout,
    bench_synthesis
);
criterion_main!(benches);
