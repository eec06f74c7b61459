//! Flat, typed key-value experiment configs with dotted section prefixes
//! (`task.num_classes=2`). Diff-friendly, byte-stable, and echoed verbatim
//! into every summary so a run can be reproduced from its outputs.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result, anyhow, bail};

use fedrank_core::game::{EmpiricalEval, GameConfig, StrategyProfile, TaskTemplate, UtilityEval};
use fedrank_core::learner::TrainConfig;
use fedrank_core::mechanism::{MechanismConfig, MechanismMode, RankMetric};
use fedrank_core::rng::{TAG_SIZES, derive_seed};
use fedrank_core::synthdata::{SizeDistribution, TaskSpec, sample_sizes};
use fedrank_core::utility::{CostModel, PerformanceModel, PopulationModel, UtilityParams};

/// Parsed key-value pairs, keys unique, order-independent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key=value, got `{line}`", lineno + 1))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                bail!("line {}: empty key", lineno + 1);
            }
            if entries.insert(key.clone(), value).is_some() {
                bail!("line {}: duplicate key `{key}`", lineno + 1);
            }
        }
        Ok(RawConfig { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn from_map(entries: BTreeMap<String, String>) -> Self {
        RawConfig { entries }
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.entries.insert(key.to_string(), value);
    }

    pub fn require_str(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| anyhow!("missing required key `{key}`"))
    }

    pub fn require<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Debug,
    {
        let raw = self.require_str(key)?;
        raw.parse()
            .map_err(|e| anyhow!("invalid value for key `{key}`: `{raw}` ({e:?})"))
    }

    pub fn optional<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Debug,
    {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("invalid value for key `{key}`: `{raw}` ({e:?})")),
        }
    }

    pub fn optional_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Debug,
    {
        Ok(self.optional(key)?.unwrap_or(default))
    }

    /// The mandatory experiment seed; wall-clock seeding is not supported.
    pub fn seed(&self) -> Result<u64> {
        self.require("seed")
    }
}

fn parse_u64_list(key: &str, raw: &str) -> Result<Vec<u64>> {
    raw.split(',')
        .map(|part| {
            part.trim()
                .parse::<u64>()
                .map_err(|e| anyhow!("invalid value for key `{key}`: `{part}` ({e})"))
        })
        .collect()
}

/// Parses a size distribution literal: `uniform:D`, `pareto:SHAPE,SCALE`,
/// `exponential:RATE`, or `explicit:A,B,C`.
fn parse_distribution(key: &str, raw: &str) -> Result<SizeDistribution> {
    let (kind, args) = raw.split_once(':').unwrap_or((raw, ""));
    let parts: Vec<&str> = if args.is_empty() {
        vec![]
    } else {
        args.split(',').collect()
    };
    let num = |i: usize| -> Result<f64> {
        parts
            .get(i)
            .ok_or_else(|| anyhow!("invalid value for key `{key}`: `{raw}` (missing argument)"))?
            .trim()
            .parse::<f64>()
            .map_err(|e| anyhow!("invalid value for key `{key}`: `{raw}` ({e})"))
    };
    let dist = match kind.trim() {
        "uniform" => SizeDistribution::Uniform { d_max: num(0)? },
        "pareto" => SizeDistribution::Pareto {
            shape: num(0)?,
            scale: num(1)?,
        },
        "exponential" => SizeDistribution::Exponential { rate: num(0)? },
        "explicit" => SizeDistribution::Explicit(parse_u64_list(key, args)?),
        other => bail!("invalid value for key `{key}`: unknown distribution `{other}`"),
    };
    dist.validate()
        .map_err(|e| anyhow!("invalid value for key `{key}`: {e}"))?;
    Ok(dist)
}

/// Client sizes plus the task they train on.
pub struct TaskSection {
    pub spec: TaskSpec,
    pub sizes: Vec<u64>,
}

/// Builds the task from `task.*` keys. Sizes come from `task.sizes`
/// verbatim, or are sampled from `task.size_dist` for `task.num_clients`
/// clients using the experiment seed.
pub fn task_section(raw: &RawConfig, seed: u64) -> Result<TaskSection> {
    let sizes: Vec<u64> = match raw.get("task.sizes") {
        Some(list) => parse_u64_list("task.sizes", list)?,
        None => {
            let dist = parse_distribution("task.size_dist", raw.require_str("task.size_dist")?)?;
            let n: usize = raw.require("task.num_clients")?;
            sample_sizes(&dist, n, derive_seed(seed, &[TAG_SIZES]))
                .map_err(|e| anyhow!("task.size_dist: {e}"))?
        }
    };
    let spec = TaskSpec {
        num_classes: raw.require("task.num_classes")?,
        feature_dim: raw.require("task.feature_dim")?,
        class_separation: raw.require("task.class_separation")?,
        samples_per_client: sizes.iter().map(|&s| s as usize).collect(),
        validation_size: raw.require("task.validation_size")?,
        seed,
    };
    spec.validate().map_err(|e| anyhow!("task: {e}"))?;
    Ok(TaskSection { spec, sizes })
}

pub fn mechanism_section(raw: &RawConfig) -> Result<(MechanismConfig, usize)> {
    let mode = match raw.require_str("mechanism.mode")? {
        "incentive" => MechanismMode::Incentive,
        "vanilla" => MechanismMode::Vanilla {
            weighted: raw.optional_or("mechanism.weighted", false)?,
        },
        other => bail!("invalid value for key `mechanism.mode`: `{other}`"),
    };
    let rank_metric = match raw.get("mechanism.rank_metric").unwrap_or("accuracy") {
        "accuracy" => RankMetric::Accuracy,
        "loss" => RankMetric::Loss,
        other => bail!("invalid value for key `mechanism.rank_metric`: `{other}`"),
    };
    let participation = raw.optional_or("mechanism.participation", 1.0)?;
    let rounds: usize = raw.require("mechanism.rounds")?;
    if rounds == 0 {
        bail!("invalid value for key `mechanism.rounds`: must be at least 1");
    }
    Ok((
        MechanismConfig {
            mode,
            participation,
            rank_metric,
        },
        rounds,
    ))
}

pub fn train_section(raw: &RawConfig, seed: u64) -> Result<TrainConfig> {
    let cfg = TrainConfig {
        learning_rate: raw.require("train.learning_rate")?,
        local_epochs: raw.require("train.local_epochs")?,
        batch_size: raw.require("train.batch_size")?,
        seed,
    };
    cfg.validate().map_err(|e| anyhow!("train: {e}"))?;
    Ok(cfg)
}

pub fn utility_section(raw: &RawConfig) -> Result<UtilityParams> {
    let performance = PerformanceModel {
        theta: raw.require("utility.theta")?,
        beta_g: raw.require("utility.beta_g")?,
        gamma_f: raw.optional_or("utility.gamma_f", 1.0)?,
    };
    let cost = CostModel {
        linear: raw.optional_or("utility.cost_linear", 0.0)?,
        quadratic: raw.optional_or("utility.cost_quadratic", 0.0)?,
    };
    let population = PopulationModel {
        n: raw.require("utility.population_n")?,
        dist: parse_distribution(
            "utility.population_dist",
            raw.require_str("utility.population_dist")?,
        )?,
    };
    let params = UtilityParams {
        gamma_u: raw.require("utility.gamma_u")?,
        alpha: raw.require("utility.alpha")?,
        performance,
        cost,
        population,
        cap: raw.require("utility.cap")?,
    };
    params.validate().map_err(|e| anyhow!("utility: {e}"))?;
    Ok(params)
}

/// The game section: evaluation mode, grid, caps, and the starting profile.
pub struct GameSection {
    pub config: GameConfig,
    pub start: StrategyProfile,
}

pub fn game_section(raw: &RawConfig, seed: u64) -> Result<GameSection> {
    let caps: Vec<u64> = match raw.get("game.caps") {
        Some(list) => parse_u64_list("game.caps", list)?,
        None => {
            let dist = parse_distribution(
                "utility.population_dist",
                raw.require_str("utility.population_dist")?,
            )?;
            let n: usize = raw.require("game.num_clients")?;
            sample_sizes(&dist, n, derive_seed(seed, &[TAG_SIZES, 1]))
                .map_err(|e| anyhow!("game.num_clients: {e}"))?
        }
    };
    let caps_map: std::collections::BTreeMap<usize, u64> =
        caps.iter().copied().enumerate().collect();

    let start = match raw.get("game.start").unwrap_or("caps") {
        "caps" => StrategyProfile::all_caps(caps_map.clone()),
        "zeros" => StrategyProfile::all_zero(caps_map.clone()),
        explicit => {
            let list = explicit
                .strip_prefix("explicit:")
                .ok_or_else(|| anyhow!("invalid value for key `game.start`: `{explicit}`"))?;
            let plays = parse_u64_list("game.start", list)?;
            if plays.len() != caps.len() {
                bail!(
                    "invalid value for key `game.start`: {} entries for {} clients",
                    plays.len(),
                    caps.len()
                );
            }
            StrategyProfile::new(caps_map.clone(), plays.into_iter().enumerate().collect())
        }
    }
    .map_err(|e| anyhow!("game.start: {e}"))?;

    let eval = match raw.get("game.eval").unwrap_or("analytic") {
        "analytic" => UtilityEval::Analytic,
        "meanfield" => UtilityEval::MeanField,
        "empirical" => {
            let task = TaskTemplate {
                num_classes: raw.require("task.num_classes")?,
                feature_dim: raw.require("task.feature_dim")?,
                class_separation: raw.require("task.class_separation")?,
                validation_size: raw.require("task.validation_size")?,
                seed,
            };
            UtilityEval::Empirical(EmpiricalEval {
                task,
                train: train_section(raw, seed)?,
                rounds: raw.optional_or("game.rounds", 5)?,
            })
        }
        other => bail!("invalid value for key `game.eval`: `{other}`"),
    };

    let config = GameConfig {
        eval,
        grid_step: raw.optional_or("game.grid_step", 1)?,
        max_iters: raw.optional_or("game.max_iters", 100)?,
        seed,
    };
    config.validate().map_err(|e| anyhow!("game: {e}"))?;
    Ok(GameSection { config, start })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_reports_errors_by_key() {
        let raw = RawConfig::parse("a.x = 1\n# comment\n\nb=two\n").unwrap();
        assert_eq!(raw.get("a.x"), Some("1"));
        assert_eq!(raw.get("b"), Some("two"));

        let err = RawConfig::parse("noequals\n").unwrap_err();
        assert!(err.to_string().contains("line 1"));

        let err = RawConfig::parse("k=1\nk=2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate key `k`"));

        let raw = RawConfig::parse("x=abc\n").unwrap();
        let err = raw.require::<u64>("x").unwrap_err();
        assert!(err.to_string().contains("`x`"));

        let err = raw.seed().unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn distribution_literals() {
        assert_eq!(
            parse_distribution("k", "uniform:100").unwrap(),
            SizeDistribution::Uniform { d_max: 100.0 }
        );
        assert_eq!(
            parse_distribution("k", "pareto:2,10").unwrap(),
            SizeDistribution::Pareto {
                shape: 2.0,
                scale: 10.0
            }
        );
        assert_eq!(
            parse_distribution("k", "explicit:5,6").unwrap(),
            SizeDistribution::Explicit(vec![5, 6])
        );
        assert!(parse_distribution("k", "pareto:0.5,10").is_err());
        assert!(parse_distribution("k", "triangular:1").is_err());
    }
}
