//! Desk-scale simulator and analysis library for a non-monetary federated
//! learning incentive mechanism: the server ranks uploaded client models on a
//! validation set and returns better-aggregated models to bigger contributors.
//!
//! The crate has two layers that check each other:
//!
//! - a **simulation layer** ([`synthdata`], [`learner`], [`mechanism`]) that
//!   actually trains logistic models over synthetic tasks and runs the ranked
//!   aggregation protocol round by round, and
//! - an **analytic layer** ([`utility`], [`game`]) with parametric
//!   performance/cost curves, the population model behind `D_others(d)`, the
//!   utility derivatives, and the game-theoretic checks (mechanism comparison,
//!   best-response dynamics, Nash verification).
//!
//! Everything is deterministic given the experiment seed; see [`rng`].
//!
//! ```
//! use fedrank_core::mechanism::{ClientRecord, MechanismConfig, run_training};
//! use fedrank_core::synthdata::{TaskSpec, generate_task};
//! use fedrank_core::learner::TrainConfig;
//!
//! let spec = TaskSpec {
//!     num_classes: 2,
//!     feature_dim: 2,
//!     class_separation: 2.0,
//!     samples_per_client: vec![50, 100, 150],
//!     validation_size: 200,
//!     seed: 42,
//! };
//! let (datasets, validation) = generate_task(&spec)?;
//! let clients: Vec<ClientRecord> = datasets
//!     .into_iter()
//!     .enumerate()
//!     .map(|(id, data)| {
//!         let n = data.len() as u64;
//!         ClientRecord::new(id, data, n, n)
//!     })
//!     .collect::<fedrank_core::Result<_>>()?;
//! let train = TrainConfig { learning_rate: 0.1, local_epochs: 2, batch_size: 32, seed: 42 };
//!
//! let (logs, models) = run_training(clients, validation, MechanismConfig::incentive(), train, 5, 42)?;
//! assert_eq!(logs.len(), 5);
//! // the biggest contributor ends at the top rank more often than not;
//! // its returned model is the average of every upload that round
//! let last = logs.last().unwrap();
//! assert_eq!(last.entries.len(), models.len());
//! # Ok::<(), fedrank_core::Error>(())
//! ```

pub mod error;
pub mod game;
pub mod learner;
pub mod mechanism;
pub mod rng;
pub mod stats;
pub mod synthdata;
pub mod utility;
mod validate;

pub use error::{Error, Result};
pub use game::{BestResponseResult, GameConfig, StrategyProfile, UtilityEval};
pub use learner::{Evaluation, ModelParams, TrainConfig};
pub use mechanism::{
    ClientRecord, Federation, MechanismConfig, MechanismMode, RankAssignment, RankMetric,
    RoundEntry, RoundLog,
};
pub use synthdata::{DataPoint, Dataset, SizeDistribution, TaskSpec};
pub use utility::{
    CostModel, PerformanceModel, PopulationModel, SufficiencyCheck, UtilityMode, UtilityParams,
};
