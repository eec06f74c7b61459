//! Server-side mechanism: ranking by validation score, plain federated
//! averaging, and the incentive variant where client `k` receives the mean of
//! the models ranked at positions `1..=r(k)`.
//!
//! Position 1 is the worst performer. The lowest-ranked client therefore gets
//! its own model back unchanged, and the top-ranked client gets the mean of
//! every upload — the same model plain unweighted averaging would produce.
//! All aggregation sums run in ascending client id so results are bit-stable
//! regardless of scheduling.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::learner::{self, ModelParams, TrainConfig};
use crate::rng::{TAG_PARTICIPATION, TAG_TRAIN, derive_rng};
use crate::synthdata::Dataset;

/// A client as the server sees it: identity, data, contribution, cap.
#[derive(Debug, Clone)]
pub struct ClientRecord {
    pub id: usize,
    pub dataset: Dataset,
    /// Amount of data the client chose to contribute (`d_i`).
    pub contributed: u64,
    /// Maximum amount it could obtain (`d_i <= cap`).
    pub cap: u64,
}

impl ClientRecord {
    pub fn new(id: usize, dataset: Dataset, contributed: u64, cap: u64) -> Result<Self> {
        if contributed > cap {
            return Err(Error::InvalidParameter(format!(
                "client {id}: contribution {contributed} exceeds cap {cap}"
            )));
        }
        if dataset.len() as u64 != contributed {
            return Err(Error::InvalidParameter(format!(
                "client {id}: dataset has {} points but contribution is {contributed}",
                dataset.len()
            )));
        }
        Ok(ClientRecord {
            id,
            dataset,
            contributed,
            cap,
        })
    }
}

/// Result of ranking uploaded models: a permutation of positions `1..=n`
/// (ascending score, ties broken by ascending client id) plus the scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RankAssignment {
    position: BTreeMap<usize, usize>,
    scores: BTreeMap<usize, f64>,
}

impl RankAssignment {
    pub fn position(&self, id: usize) -> Option<usize> {
        self.position.get(&id).copied()
    }

    pub fn score(&self, id: usize) -> Option<f64> {
        self.scores.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    /// Client ids ordered by position (worst first).
    pub fn ids_by_position(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.position.keys().copied().collect();
        ids.sort_by_key(|id| self.position[id]);
        ids
    }

    /// Positions must form a permutation of `1..=n`.
    pub fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.position.len()];
        for &p in self.position.values() {
            if p == 0 || p > seen.len() || seen[p - 1] {
                return false;
            }
            seen[p - 1] = true;
        }
        true
    }
}

/// Ranks clients by validation score, ascending: position 1 is the lowest
/// score, position `n` the highest. Equal scores order by ascending id.
pub fn rank_by_accuracy(scores: &BTreeMap<usize, f64>) -> Result<RankAssignment> {
    if scores.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot rank an empty score map".into(),
        ));
    }
    for (&id, &s) in scores {
        if !s.is_finite() {
            return Err(Error::NonFiniteScore { client: id });
        }
    }
    let mut order: Vec<usize> = scores.keys().copied().collect();
    order.sort_by(|&a, &b| {
        scores[&a]
            .partial_cmp(&scores[&b])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let position = order
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i + 1))
        .collect();
    Ok(RankAssignment {
        position,
        scores: scores.clone(),
    })
}

fn check_same_shape(models: &[&ModelParams]) -> Result<()> {
    let first = models[0];
    for m in &models[1..] {
        if m.len() != first.len()
            || m.feature_dim() != first.feature_dim()
            || m.num_classes() != first.num_classes()
        {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                actual: m.len(),
            });
        }
    }
    Ok(())
}

/// Size-weighted federated average: component-wise `sum_k (n_k / N) w_k`.
pub fn aggregate_weighted(models: &[ModelParams], sizes: &[u64]) -> Result<ModelParams> {
    if models.is_empty() {
        return Err(Error::InvalidParameter("nothing to aggregate".into()));
    }
    if models.len() != sizes.len() {
        return Err(Error::DimensionMismatch {
            expected: models.len(),
            actual: sizes.len(),
        });
    }
    let refs: Vec<&ModelParams> = models.iter().collect();
    check_same_shape(&refs)?;
    let total: u64 = sizes.iter().sum();
    if total == 0 {
        return Err(Error::InvalidParameter(
            "all aggregation weights are zero".into(),
        ));
    }
    let mut out = vec![0.0; models[0].len()];
    for (model, &size) in models.iter().zip(sizes) {
        let w = size as f64 / total as f64;
        for (o, v) in out.iter_mut().zip(model.values()) {
            *o += w * v;
        }
    }
    ModelParams::from_values(out, models[0].feature_dim(), models[0].num_classes())
}

/// Unweighted federated average: the component-wise arithmetic mean, summed
/// in the order the models are given.
pub fn aggregate_unweighted(models: &[ModelParams]) -> Result<ModelParams> {
    if models.is_empty() {
        return Err(Error::InvalidParameter("nothing to aggregate".into()));
    }
    let refs: Vec<&ModelParams> = models.iter().collect();
    check_same_shape(&refs)?;
    let mut out = vec![0.0; models[0].len()];
    for model in models {
        for (o, v) in out.iter_mut().zip(model.values()) {
            *o += v;
        }
    }
    let inv = 1.0 / models.len() as f64;
    for o in &mut out {
        *o *= inv;
    }
    ModelParams::from_values(out, models[0].feature_dim(), models[0].num_classes())
}

/// The incentive aggregation: client `k` receives the component-wise mean of
/// the models at positions `1..=r(k)`.
///
/// Members are summed in ascending client id, so the top-ranked client's
/// result is bit-identical to [`aggregate_unweighted`] over all uploads in id
/// order, and the position-1 client's result is bit-identical to its upload.
pub fn incentive_aggregate(
    models: &BTreeMap<usize, ModelParams>,
    rank: &RankAssignment,
) -> Result<BTreeMap<usize, ModelParams>> {
    if models.len() != rank.len() || models.keys().any(|id| rank.position(*id).is_none()) {
        return Err(Error::ClientMismatch(
            "models and rank assignment must cover the same client ids".into(),
        ));
    }
    let mut out = BTreeMap::new();
    for &id in models.keys() {
        let own_pos = rank.position(id).expect("checked above");
        // aggregation set: everyone ranked at or below own position,
        // iterated in ascending id (BTreeMap order)
        let members: Vec<&ModelParams> = models
            .iter()
            .filter(|(mid, _)| rank.position(**mid).expect("same ids") <= own_pos)
            .map(|(_, m)| m)
            .collect();
        check_same_shape(&members)?;
        let mut sum = vec![0.0; members[0].len()];
        for m in &members {
            for (s, v) in sum.iter_mut().zip(m.values()) {
                *s += v;
            }
        }
        let inv = 1.0 / members.len() as f64;
        for s in &mut sum {
            *s *= inv;
        }
        out.insert(
            id,
            ModelParams::from_values(sum, members[0].feature_dim(), members[0].num_classes())?,
        );
    }
    Ok(out)
}

/// Which model the server distributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MechanismMode {
    /// One global model for everyone. `weighted` selects size-weighted
    /// averaging; the default unweighted form matches a server that does not
    /// ask clients to report data sizes.
    Vanilla { weighted: bool },
    /// Ranked per-client aggregation; there is no global model.
    Incentive,
}

/// Validation score used for ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankMetric {
    #[default]
    Accuracy,
    /// Rank by validation loss (lower loss ranks higher).
    Loss,
}

/// Server-side configuration for a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismConfig {
    pub mode: MechanismMode,
    /// Fraction of clients participating each round, in `(0, 1]`.
    pub participation: f64,
    pub rank_metric: RankMetric,
}

impl MechanismConfig {
    pub fn incentive() -> Self {
        MechanismConfig {
            mode: MechanismMode::Incentive,
            participation: 1.0,
            rank_metric: RankMetric::Accuracy,
        }
    }

    pub fn vanilla() -> Self {
        MechanismConfig {
            mode: MechanismMode::Vanilla { weighted: false },
            participation: 1.0,
            rank_metric: RankMetric::Accuracy,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !crate::validate::in_unit_interval_half_open(self.participation) {
            return Err(Error::InvalidParameter(format!(
                "participation must be in (0, 1], got {}",
                self.participation
            )));
        }
        if ((self.participation * n as f64).round() as usize) < 1 {
            return Err(Error::InvalidParameter(
                "participation fraction rounds to zero clients".into(),
            ));
        }
        Ok(())
    }
}

/// Telemetry for one (round, client) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundEntry {
    pub client_id: usize,
    /// Contributed data amount `d_i`.
    pub contributed: u64,
    /// Validation accuracy of the uploaded model.
    pub acc_uploaded: f64,
    /// Rank position `r(k)`; 1 is worst.
    pub position: usize,
    /// Data total behind the *other* models aggregated into this client's
    /// returned model.
    pub d_others: u64,
    /// Validation accuracy of the distributed model.
    pub acc_distributed: f64,
}

/// Per-round telemetry, one entry per participating client, in id order.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub round: usize,
    pub entries: Vec<RoundEntry>,
}

/// CSV header matching [`RoundLog::csv_rows`].
pub const ROUNDS_CSV_HEADER: &str =
    "t,client_id,d_i,acc_uploaded,position,D_others,acc_distributed";

impl RoundLog {
    /// One CSV row per client: `t,client_id,d_i,acc_uploaded,position,D_others,acc_distributed`.
    pub fn csv_rows(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| {
                format!(
                    "{},{},{},{},{},{},{}",
                    self.round,
                    e.client_id,
                    e.contributed,
                    e.acc_uploaded,
                    e.position,
                    e.d_others,
                    e.acc_distributed
                )
            })
            .collect()
    }
}

/// A federation in progress: clients, validation holdout, per-client models.
#[derive(Debug, Clone)]
pub struct Federation {
    clients: Vec<ClientRecord>,
    validation: Dataset,
    mechanism: MechanismConfig,
    train: TrainConfig,
    seed: u64,
    models: BTreeMap<usize, ModelParams>,
    round: usize,
}

impl Federation {
    /// Sets up a federation with every client holding the same initial model.
    pub fn new(
        clients: Vec<ClientRecord>,
        validation: Dataset,
        mechanism: MechanismConfig,
        train: TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        if clients.is_empty() {
            return Err(Error::InvalidParameter(
                "federation needs at least one client".into(),
            ));
        }
        if validation.is_empty() {
            return Err(Error::EmptyDataset("validation set"));
        }
        let mut ids: Vec<usize> = clients.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != clients.len() {
            return Err(Error::InvalidParameter("duplicate client ids".into()));
        }
        mechanism.validate(clients.len())?;
        train.validate()?;
        let initial = learner::init_model(validation.feature_dim, validation.num_classes, seed)?;
        let models = clients.iter().map(|c| (c.id, initial.clone())).collect();
        Ok(Federation {
            clients,
            validation,
            mechanism,
            train,
            seed,
            models,
            round: 0,
        })
    }

    pub fn models(&self) -> &BTreeMap<usize, ModelParams> {
        &self.models
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn clients(&self) -> &[ClientRecord] {
        &self.clients
    }

    /// Training config for a given round; exposed so a run can be replayed
    /// piecewise. The shuffle seed varies per round but not per client:
    /// clients with identical data must produce identical uploads.
    pub fn round_train_config(&self, round: usize) -> TrainConfig {
        let mut cfg = self.train.clone();
        let mut rng = derive_rng(self.seed, &[TAG_TRAIN, round as u64]);
        cfg.seed = rand::Rng::random(&mut rng);
        cfg
    }

    fn participants(&self, round: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = self.clients.iter().map(|c| c.id).collect();
        if self.mechanism.participation >= 1.0 {
            return ids;
        }
        let count = ((self.mechanism.participation * ids.len() as f64).round() as usize).max(1);
        let mut rng = derive_rng(self.seed, &[TAG_PARTICIPATION, round as u64]);
        ids.shuffle(&mut rng);
        ids.truncate(count);
        ids.sort_unstable();
        ids
    }

    /// Runs one round: local training in parallel, server evaluation,
    /// ranking, aggregation, and distribution.
    ///
    /// A client without data uploads its current model unchanged. With
    /// partial participation, non-participants keep their models and are not
    /// logged that round.
    pub fn run_round(&mut self) -> Result<RoundLog> {
        let t = self.round + 1;
        let participant_ids = self.participants(t);

        let by_id: BTreeMap<usize, &ClientRecord> =
            self.clients.iter().map(|c| (c.id, c)).collect();

        // ClientUpdate in parallel; merged in id order for determinism.
        let round_cfg = self.round_train_config(t);
        let uploads: Vec<(usize, ModelParams)> = participant_ids
            .par_iter()
            .map(|&id| {
                let record = by_id[&id];
                let current = &self.models[&id];
                let model = if record.dataset.is_empty() {
                    Ok(current.clone())
                } else {
                    learner::local_train(current, &record.dataset, &round_cfg)
                };
                model.map(|m| (id, m))
            })
            .collect::<Result<_>>()?;

        let evals: Vec<(usize, learner::Evaluation)> = uploads
            .par_iter()
            .map(|(id, m)| learner::evaluate(m, &self.validation).map(|e| (*id, e)))
            .collect::<Result<_>>()?;

        let uploads: BTreeMap<usize, ModelParams> = uploads.into_iter().collect();
        let accuracies: BTreeMap<usize, f64> =
            evals.iter().map(|(id, e)| (*id, e.accuracy)).collect();
        let scores: BTreeMap<usize, f64> = match self.mechanism.rank_metric {
            RankMetric::Accuracy => accuracies.clone(),
            RankMetric::Loss => evals.iter().map(|(id, e)| (*id, -e.loss)).collect(),
        };
        let rank = rank_by_accuracy(&scores)?;

        let distributed: BTreeMap<usize, ModelParams> = match self.mechanism.mode {
            MechanismMode::Incentive => incentive_aggregate(&uploads, &rank)?,
            MechanismMode::Vanilla { weighted } => {
                let ordered: Vec<ModelParams> = uploads.values().cloned().collect();
                let global = if weighted {
                    let sizes: Vec<u64> = uploads.keys().map(|id| by_id[id].contributed).collect();
                    aggregate_weighted(&ordered, &sizes)?
                } else {
                    aggregate_unweighted(&ordered)?
                };
                uploads.keys().map(|&id| (id, global.clone())).collect()
            }
        };

        let dist_accs: Vec<(usize, f64)> = distributed
            .par_iter()
            .map(|(&id, m)| learner::evaluate(m, &self.validation).map(|e| (id, e.accuracy)))
            .collect::<Result<_>>()?;
        let dist_accs: BTreeMap<usize, f64> = dist_accs.into_iter().collect();

        let participant_total: u64 = participant_ids.iter().map(|id| by_id[id].contributed).sum();
        let entries = participant_ids
            .iter()
            .map(|&id| {
                let own_pos = rank.position(id).expect("participant is ranked");
                let d_others = match self.mechanism.mode {
                    MechanismMode::Incentive => participant_ids
                        .iter()
                        .filter(|&&j| j != id && rank.position(j).expect("ranked") <= own_pos)
                        .map(|j| by_id[j].contributed)
                        .sum(),
                    MechanismMode::Vanilla { .. } => participant_total - by_id[&id].contributed,
                };
                RoundEntry {
                    client_id: id,
                    contributed: by_id[&id].contributed,
                    acc_uploaded: accuracies[&id],
                    position: own_pos,
                    d_others,
                    acc_distributed: dist_accs[&id],
                }
            })
            .collect();

        for (id, model) in distributed {
            self.models.insert(id, model);
        }
        self.round = t;
        Ok(RoundLog { round: t, entries })
    }

    /// Runs `rounds` rounds, threading the per-client models through.
    pub fn run_training(&mut self, rounds: usize) -> Result<Vec<RoundLog>> {
        if rounds == 0 {
            return Err(Error::InvalidParameter(
                "round count must be at least 1".into(),
            ));
        }
        (0..rounds).map(|_| self.run_round()).collect()
    }
}

/// Convenience wrapper: build a federation, run `rounds` rounds, return the
/// logs and the final per-client models.
pub fn run_training(
    clients: Vec<ClientRecord>,
    validation: Dataset,
    mechanism: MechanismConfig,
    train: TrainConfig,
    rounds: usize,
    seed: u64,
) -> Result<(Vec<RoundLog>, BTreeMap<usize, ModelParams>)> {
    let mut federation = Federation::new(clients, validation, mechanism, train, seed)?;
    let logs = federation.run_training(rounds)?;
    Ok((logs, federation.models.clone()))
}
