//! Shared fixtures for the benchmark suite.

use std::collections::BTreeMap;

use fedrank_core::game::StrategyProfile;
use fedrank_core::learner::TrainConfig;
use fedrank_core::mechanism::ClientRecord;
use fedrank_core::synthdata::{Dataset, SizeDistribution, TaskSpec, generate_task};
use fedrank_core::utility::{CostModel, PerformanceModel, PopulationModel, UtilityParams};

/// Ten clients with sizes 50..500 on the 2-feature Gaussian task.
pub fn standard_federation_inputs() -> (Vec<ClientRecord>, Dataset, TrainConfig) {
    let spec = TaskSpec {
        num_classes: 2,
        feature_dim: 2,
        class_separation: 2.0,
        samples_per_client: (1..=10).map(|k| k * 50).collect(),
        validation_size: 500,
        seed: 42,
    };
    let (datasets, validation) = generate_task(&spec).expect("valid spec");
    let clients = datasets
        .into_iter()
        .enumerate()
        .map(|(id, data)| {
            let n = data.len() as u64;
            ClientRecord::new(id, data, n, n).expect("consistent record")
        })
        .collect();
    let train = TrainConfig {
        learning_rate: 0.1,
        local_epochs: 2,
        batch_size: 32,
        seed: 42,
    };
    (clients, validation, train)
}

/// A Pareto-population utility parameterization with interior optimum.
pub fn standard_utility_params() -> UtilityParams {
    UtilityParams {
        gamma_u: 1.0,
        alpha: 1.0,
        performance: PerformanceModel {
            theta: 1.0,
            beta_g: -0.5,
            gamma_f: 1.0,
        },
        cost: CostModel {
            linear: 1e-4,
            quadratic: 0.0,
        },
        population: PopulationModel {
            n: 50,
            dist: SizeDistribution::Pareto {
                shape: 2.0,
                scale: 10.0,
            },
        },
        cap: 500.0,
    }
}

/// Ten-client all-caps profile with sizes 50..500.
pub fn standard_profile() -> StrategyProfile {
    let caps: BTreeMap<usize, u64> = (1..=10u64).map(|k| (k as usize - 1, k * 50)).collect();
    StrategyProfile::all_caps(caps).expect("valid caps")
}
