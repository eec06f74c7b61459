//! Strategic layer: per-client best responses over discrete contribution
//! grids, round-robin best-response dynamics, Nash verification, and the
//! head-to-head comparison of the two mechanisms.
//!
//! Contributions are integers (data points), so every check carries a
//! one-grid-step tolerance. Utilities can be evaluated three ways:
//!
//! - `Analytic`: the exact finite-population counterpart of the ranking rule
//!   — a client contributing `d` is aggregated with every opponent whose
//!   `(contribution, id)` pair precedes its own.
//! - `MeanField`: the continuous population model from [`crate::utility`],
//!   the form the maximal-contribution theory is stated in.
//! - `Empirical`: actually run the federated simulation for a few rounds and
//!   read the client's distributed-model validation accuracy off the logs.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::learner::TrainConfig;
use crate::mechanism::{ClientRecord, MechanismConfig, MechanismMode, run_training};
use crate::synthdata::{TaskSpec, generate_task};
use crate::utility::{UtilityMode, UtilityParams};

/// Unilateral deviations with utility gain at or below this are ignored.
pub const NASH_TOLERANCE: f64 = 1e-9;

/// Per-client contribution choices with their caps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StrategyProfile {
    contributions: BTreeMap<usize, u64>,
    caps: BTreeMap<usize, u64>,
}

impl StrategyProfile {
    pub fn new(caps: BTreeMap<usize, u64>, contributions: BTreeMap<usize, u64>) -> Result<Self> {
        if caps.is_empty() {
            return Err(Error::InvalidParameter(
                "profile needs at least one client".into(),
            ));
        }
        if caps.len() != contributions.len()
            || caps.keys().any(|id| !contributions.contains_key(id))
        {
            return Err(Error::ClientMismatch(
                "caps and contributions must share ids".into(),
            ));
        }
        for (&id, &d) in &contributions {
            if d > caps[&id] {
                return Err(Error::InvalidParameter(format!(
                    "client {id}: contribution {d} exceeds cap {}",
                    caps[&id]
                )));
            }
        }
        Ok(StrategyProfile {
            contributions,
            caps,
        })
    }

    /// Everyone plays its cap.
    pub fn all_caps(caps: BTreeMap<usize, u64>) -> Result<Self> {
        let contributions = caps.clone();
        Self::new(caps, contributions)
    }

    /// Everyone plays zero.
    pub fn all_zero(caps: BTreeMap<usize, u64>) -> Result<Self> {
        let contributions = caps.keys().map(|&id| (id, 0)).collect();
        Self::new(caps, contributions)
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.contributions.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.contributions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contributions.is_empty()
    }

    pub fn contribution(&self, id: usize) -> u64 {
        self.contributions[&id]
    }

    pub fn cap(&self, id: usize) -> u64 {
        self.caps[&id]
    }

    pub fn contributions(&self) -> &BTreeMap<usize, u64> {
        &self.contributions
    }

    pub fn set_contribution(&mut self, id: usize, d: u64) -> Result<()> {
        let cap = *self
            .caps
            .get(&id)
            .ok_or_else(|| Error::ClientMismatch(format!("unknown client {id}")))?;
        if d > cap {
            return Err(Error::InvalidParameter(format!(
                "client {id}: contribution {d} exceeds cap {cap}"
            )));
        }
        self.contributions.insert(id, d);
        Ok(())
    }

    /// Other-data total for client `id` playing `d` under the ranking rule:
    /// opponent `j` is included exactly when `(d_j, j) < (d, id)`.
    fn d_others_at(&self, id: usize, d: u64) -> u64 {
        self.contributions
            .iter()
            .filter(|&(&j, &dj)| j != id && (dj, j) < (d, id))
            .map(|(_, &dj)| dj)
            .sum()
    }
}

/// Task shape for empirical evaluation; sizes come from the profile.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskTemplate {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub class_separation: f64,
    pub validation_size: usize,
    pub seed: u64,
}

impl TaskTemplate {
    fn to_spec(&self, samples_per_client: Vec<usize>) -> TaskSpec {
        TaskSpec {
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            class_separation: self.class_separation,
            samples_per_client,
            validation_size: self.validation_size,
            seed: self.seed,
        }
    }
}

/// Empirical evaluation settings: a short simulation per utility query.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalEval {
    pub task: TaskTemplate,
    pub train: TrainConfig,
    /// Rounds per query; accuracy ordering stabilizes early, so this stays
    /// small by default.
    pub rounds: usize,
}

/// How client utilities are evaluated by the game layer.
#[derive(Debug, Clone, PartialEq)]
pub enum UtilityEval {
    /// Finite-population step `D_others` from the actual opponent profile.
    Analytic,
    /// Continuous population model (the theory's `D_others(d)` function).
    MeanField,
    /// Run the simulator and use measured validation accuracy as `p`.
    Empirical(EmpiricalEval),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    pub eval: UtilityEval,
    /// Grid step for best responses, in data points.
    pub grid_step: u64,
    /// Cap on best-response passes.
    pub max_iters: usize,
    pub seed: u64,
}

impl GameConfig {
    pub fn analytic(grid_step: u64, max_iters: usize, seed: u64) -> Result<Self> {
        let cfg = GameConfig {
            eval: UtilityEval::Analytic,
            grid_step,
            max_iters,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_step == 0 {
            return Err(Error::InvalidParameter(
                "grid_step must be at least 1".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        if let UtilityEval::Empirical(emp) = &self.eval {
            if emp.rounds == 0 {
                return Err(Error::InvalidParameter(
                    "empirical rounds must be at least 1".into(),
                ));
            }
            emp.train.validate()?;
        }
        Ok(())
    }
}

/// Utility of client `id` if it played `d` while everyone else stays at the
/// profile, evaluated under the given mechanism.
fn deviation_utility(
    id: usize,
    d: u64,
    profile: &StrategyProfile,
    cfg: &GameConfig,
    params: &UtilityParams,
    mechanism: UtilityMode,
) -> Result<f64> {
    let df = d as f64;
    match &cfg.eval {
        UtilityEval::Analytic => {
            let d_others = match mechanism {
                UtilityMode::Incentive => profile.d_others_at(id, d) as f64,
                // one shared model: trained on everyone regardless of rank
                UtilityMode::Vanilla => profile
                    .contributions
                    .iter()
                    .filter(|&(&j, _)| j != id)
                    .map(|(_, &dj)| dj as f64)
                    .sum(),
            };
            Ok(params.gamma_u * params.performance.value(df + d_others)
                - params.alpha * params.cost.value(df))
        }
        UtilityEval::MeanField => {
            let d_others = match mechanism {
                UtilityMode::Incentive => params.population.d_others(df),
                // frozen at the profile's current play
                UtilityMode::Vanilla => params.population.d_others(profile.contribution(id) as f64),
            };
            Ok(params.gamma_u * params.performance.value(df + d_others)
                - params.alpha * params.cost.value(df))
        }
        UtilityEval::Empirical(emp) => {
            let accuracy = empirical_accuracy(id, d, profile, cfg, emp, mechanism)?;
            Ok(params.gamma_u * accuracy - params.alpha * params.cost.value(df))
        }
    }
}

/// Runs a short federation with the deviated profile and returns client
/// `id`'s final distributed-model validation accuracy.
fn empirical_accuracy(
    id: usize,
    d: u64,
    profile: &StrategyProfile,
    cfg: &GameConfig,
    emp: &EmpiricalEval,
    mechanism: UtilityMode,
) -> Result<f64> {
    let ids: Vec<usize> = profile.ids().collect();
    if ids.iter().enumerate().any(|(i, &actual)| i != actual) {
        return Err(Error::InvalidParameter(
            "empirical evaluation needs contiguous client ids 0..n".into(),
        ));
    }
    let sizes: Vec<usize> = ids
        .iter()
        .map(|&j| {
            if j == id {
                d as usize
            } else {
                profile.contribution(j) as usize
            }
        })
        .collect();
    let (datasets, validation) = generate_task(&emp.task.to_spec(sizes.clone()))?;
    let clients: Vec<ClientRecord> = datasets
        .into_iter()
        .enumerate()
        .map(|(j, data)| {
            let contributed = sizes[j] as u64;
            let cap = profile.cap(j).max(contributed);
            ClientRecord::new(j, data, contributed, cap)
        })
        .collect::<Result<_>>()?;
    let mode = match mechanism {
        UtilityMode::Incentive => MechanismMode::Incentive,
        UtilityMode::Vanilla => MechanismMode::Vanilla { weighted: false },
    };
    let mech = MechanismConfig {
        mode,
        ..MechanismConfig::incentive()
    };
    let (logs, _) = run_training(
        clients,
        validation,
        mech,
        emp.train.clone(),
        emp.rounds,
        cfg.seed,
    )?;
    let last = logs.last().expect("at least one round");
    let entry = last
        .entries
        .iter()
        .find(|e| e.client_id == id)
        .expect("full participation logs every client");
    Ok(entry.acc_distributed)
}

/// Utility of client `id` at the profile as played, under the incentive
/// mechanism.
pub fn client_utility(
    id: usize,
    profile: &StrategyProfile,
    cfg: &GameConfig,
    params: &UtilityParams,
) -> Result<f64> {
    cfg.validate()?;
    if !profile.contributions.contains_key(&id) {
        return Err(Error::ClientMismatch(format!("unknown client {id}")));
    }
    deviation_utility(
        id,
        profile.contribution(id),
        profile,
        cfg,
        params,
        UtilityMode::Incentive,
    )
}

/// Outcome of one client's best-response search.
#[derive(Debug, Clone, Serialize)]
pub struct BestResponseResult {
    pub responder: usize,
    /// Best contribution on the grid (leftmost maximizer on ties).
    pub best: u64,
    pub best_utility: f64,
    /// Utility improvement over the current play.
    pub gain: f64,
    /// The full response curve `(d, utility)`.
    pub curve: Vec<(u64, f64)>,
}

fn grid_candidates(cap: u64, step: u64) -> Vec<u64> {
    let mut out: Vec<u64> = (0..=cap).step_by(step as usize).collect();
    if *out.last().expect("0 is always present") != cap {
        out.push(cap);
    }
    out
}

fn best_response_mode(
    id: usize,
    profile: &StrategyProfile,
    cfg: &GameConfig,
    params: &UtilityParams,
    mechanism: UtilityMode,
) -> Result<BestResponseResult> {
    cfg.validate()?;
    if !profile.contributions.contains_key(&id) {
        return Err(Error::ClientMismatch(format!("unknown client {id}")));
    }
    let current = deviation_utility(
        id,
        profile.contribution(id),
        profile,
        cfg,
        params,
        mechanism,
    )?;
    let mut curve = Vec::new();
    let mut best = 0u64;
    let mut best_utility = f64::NEG_INFINITY;
    for d in grid_candidates(profile.cap(id), cfg.grid_step) {
        let u = deviation_utility(id, d, profile, cfg, params, mechanism)?;
        if u > best_utility {
            best_utility = u;
            best = d;
        }
        curve.push((d, u));
    }
    Ok(BestResponseResult {
        responder: id,
        best,
        best_utility,
        gain: best_utility - current,
        curve,
    })
}

/// Exhaustive grid search over client `id`'s contributions with everyone
/// else held fixed, under the incentive mechanism.
pub fn best_response(
    id: usize,
    profile: &StrategyProfile,
    cfg: &GameConfig,
    params: &UtilityParams,
) -> Result<BestResponseResult> {
    best_response_mode(id, profile, cfg, params, UtilityMode::Incentive)
}

/// Trajectory of round-robin best-response dynamics.
#[derive(Debug, Clone, Serialize)]
pub struct DynamicsResult {
    pub initial: StrategyProfile,
    /// Profile after each full pass; the last entry is the terminal profile.
    pub passes: Vec<StrategyProfile>,
    pub converged: bool,
}

/// Round-robin best-response dynamics in ascending id order. Stops when a
/// full pass changes no contribution or after `max_iters` passes.
pub fn best_response_dynamics(
    initial: &StrategyProfile,
    cfg: &GameConfig,
    params: &UtilityParams,
) -> Result<DynamicsResult> {
    cfg.validate()?;
    let mut profile = initial.clone();
    let ids: Vec<usize> = profile.ids().collect();
    let mut passes = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let mut changed = false;
        for &id in &ids {
            let br = best_response(id, &profile, cfg, params)?;
            if br.gain > NASH_TOLERANCE && br.best != profile.contribution(id) {
                profile.set_contribution(id, br.best)?;
                changed = true;
            }
        }
        passes.push(profile.clone());
        if !changed {
            converged = true;
            break;
        }
    }
    Ok(DynamicsResult {
        initial: initial.clone(),
        passes,
        converged,
    })
}

/// The most profitable unilateral deviation found, if any.
#[derive(Debug, Clone, Serialize)]
pub struct NashViolation {
    pub id: usize,
    pub gain: f64,
    pub better: u64,
}

/// Nash verification verdict for a profile.
#[derive(Debug, Clone, Serialize)]
pub struct NashReport {
    pub is_nash: bool,
    pub tolerance: f64,
    /// Best-response gain per client (non-positive means no improvement).
    pub gains: BTreeMap<usize, f64>,
    pub worst: Option<NashViolation>,
}

/// Checks whether no client can improve its utility by more than
/// [`NASH_TOLERANCE`] through a unilateral contribution change.
pub fn verify_nash(
    profile: &StrategyProfile,
    cfg: &GameConfig,
    params: &UtilityParams,
) -> Result<NashReport> {
    let mut gains = BTreeMap::new();
    let mut worst: Option<NashViolation> = None;
    for id in profile.ids() {
        let br = best_response(id, profile, cfg, params)?;
        gains.insert(id, br.gain);
        if br.gain > NASH_TOLERANCE && worst.as_ref().is_none_or(|w| br.gain > w.gain) {
            worst = Some(NashViolation {
                id,
                gain: br.gain,
                better: br.best,
            });
        }
    }
    Ok(NashReport {
        is_nash: worst.is_none(),
        tolerance: NASH_TOLERANCE,
        gains,
        worst,
    })
}

/// One row of the mechanism comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct MechanismComparison {
    pub id: usize,
    pub d_opt_incentive: u64,
    pub d_opt_vanilla: u64,
    pub utility_incentive: f64,
    pub utility_vanilla: f64,
    /// Whether the incentive best response is at least the vanilla one,
    /// within one grid step.
    pub holds: bool,
}

/// Computes each client's best response under both mechanisms from the same
/// opponent profile and reports the inequality status per client.
pub fn compare_mechanisms(
    profile: &StrategyProfile,
    cfg: &GameConfig,
    params: &UtilityParams,
) -> Result<Vec<MechanismComparison>> {
    profile
        .ids()
        .map(|id| {
            let inc = best_response_mode(id, profile, cfg, params, UtilityMode::Incentive)?;
            let van = best_response_mode(id, profile, cfg, params, UtilityMode::Vanilla)?;
            Ok(MechanismComparison {
                id,
                d_opt_incentive: inc.best,
                d_opt_vanilla: van.best,
                utility_incentive: inc.best_utility,
                utility_vanilla: van.best_utility,
                holds: inc.best + cfg.grid_step >= van.best,
            })
        })
        .collect()
}
