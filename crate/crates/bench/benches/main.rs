use std::hint::black_box;

use criterion::{Criterion, criterion_group, criterion_main};

use fedrank_bench::{standard_federation_inputs, standard_profile, standard_utility_params};
use fedrank_core::game::{GameConfig, best_response_dynamics};
use fedrank_core::learner::{init_model, loss_and_gradient};
use fedrank_core::mechanism::{Federation, MechanismConfig};
use fedrank_core::utility::{UtilityMode, optimal_contribution};

fn bench_loss_and_gradient(c: &mut Criterion) {
    let (clients, _, _) = standard_federation_inputs();
    let data = &clients[9].dataset;
    let model = init_model(2, 2, 1).unwrap();
    c.bench_function("loss_and_gradient_500pts", |b| {
        b.iter(|| loss_and_gradient(black_box(&model), black_box(data)).unwrap())
    });
}

fn bench_incentive_round(c: &mut Criterion) {
    let (clients, validation, train) = standard_federation_inputs();
    c.bench_function("incentive_round_10_clients", |b| {
        b.iter_batched(
            || {
                Federation::new(
                    clients.clone(),
                    validation.clone(),
                    MechanismConfig::incentive(),
                    train.clone(),
                    42,
                )
                .unwrap()
            },
            |mut federation| federation.run_round().unwrap(),
            criterion::BatchSize::LargeInput,
        )
    });
}

fn bench_optimal_contribution(c: &mut Criterion) {
    let params = standard_utility_params();
    c.bench_function("optimal_contribution_incentive", |b| {
        b.iter(|| optimal_contribution(black_box(&params), UtilityMode::Incentive, None))
    });
    c.bench_function("optimal_contribution_vanilla_selfconsistent", |b| {
        b.iter(|| optimal_contribution(black_box(&params), UtilityMode::Vanilla, None))
    });
}

fn bench_best_response_dynamics(c: &mut Criterion) {
    let params = standard_utility_params();
    let profile = standard_profile();
    let cfg = GameConfig::analytic(10, 30, 0).unwrap();
    c.bench_function("best_response_dynamics_10_clients", |b| {
        b.iter(|| best_response_dynamics(black_box(&profile), &cfg, &params).unwrap())
    });
}

criterion_group!(
    benches,
    bench_loss_and_gradient,
    bench_incentive_round,
    bench_optimal_contribution,
    bench_best_response_dynamics
);
criterion_main!(benches);
