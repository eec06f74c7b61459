//! Synthetic classification tasks and client data partitions.
//!
//! Tasks are class-conditional Gaussian blobs: class `c` has mean
//! `c * class_separation` along the first feature axis and unit isotropic
//! covariance, with a uniform class prior. Every client and the server's
//! validation holdout draw IID from this one global distribution, so model
//! quality is governed by sample count alone — the regime the incentive
//! analysis assumes.

use rand::Rng;
use rand_distr::{Distribution, Exp, Pareto, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{TAG_CLIENT_DATA, TAG_SIZES, TAG_VALIDATION, derive_rng};
use crate::validate::{non_negative_finite, positive_finite};

/// One labeled sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub features: Vec<f64>,
    pub label: usize,
}

/// A labeled dataset with its task dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: Vec<DataPoint>,
    pub num_classes: usize,
    pub feature_dim: usize,
}

impl Dataset {
    pub fn empty(num_classes: usize, feature_dim: usize) -> Self {
        Dataset {
            points: Vec::new(),
            num_classes,
            feature_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks that every point conforms to the declared dimensions.
    pub fn validate(&self) -> Result<()> {
        for p in &self.points {
            if p.features.len() != self.feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.feature_dim,
                    actual: p.features.len(),
                });
            }
            if p.label >= self.num_classes {
                return Err(Error::InvalidParameter(format!(
                    "label {} out of range for {} classes",
                    p.label, self.num_classes
                )));
            }
        }
        Ok(())
    }
}

/// Population size distributions for client data amounts.
#[derive(Debug, Clone, PartialEq)]
pub enum SizeDistribution {
    /// Uniform on `[0, d_max]`.
    Uniform { d_max: f64 },
    /// Pareto with shape `a > 1` (finite mean) and scale `x_m > 0`.
    Pareto { shape: f64, scale: f64 },
    /// Exponential with rate `lambda > 0`.
    Exponential { rate: f64 },
    /// A fixed list of sizes, returned verbatim.
    Explicit(Vec<u64>),
}

impl SizeDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SizeDistribution::Uniform { d_max } => {
                if !positive_finite(d_max) {
                    return Err(Error::InvalidParameter(format!(
                        "uniform d_max must be positive, got {d_max}"
                    )));
                }
            }
            SizeDistribution::Pareto { shape, scale } => {
                if !(shape.is_finite() && shape > 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "pareto shape must exceed 1 for a finite mean, got {shape}"
                    )));
                }
                if !positive_finite(scale) {
                    return Err(Error::InvalidParameter(format!(
                        "pareto scale must be positive, got {scale}"
                    )));
                }
            }
            SizeDistribution::Exponential { rate } => {
                if !positive_finite(rate) {
                    return Err(Error::InvalidParameter(format!(
                        "exponential rate must be positive, got {rate}"
                    )));
                }
            }
            SizeDistribution::Explicit(_) => {}
        }
        Ok(())
    }

    /// Distribution mean (before integer rounding).
    pub fn mean(&self) -> f64 {
        match self {
            SizeDistribution::Uniform { d_max } => d_max / 2.0,
            SizeDistribution::Pareto { shape, scale } => shape * scale / (shape - 1.0),
            SizeDistribution::Exponential { rate } => 1.0 / rate,
            SizeDistribution::Explicit(sizes) => {
                if sizes.is_empty() {
                    0.0
                } else {
                    sizes.iter().map(|&s| s as f64).sum::<f64>() / sizes.len() as f64
                }
            }
        }
    }
}

/// Full description of a synthetic task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub class_separation: f64,
    pub samples_per_client: Vec<usize>,
    pub validation_size: usize,
    pub seed: u64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidParameter(
                "feature_dim must be positive".into(),
            ));
        }
        if self.validation_size == 0 {
            return Err(Error::InvalidParameter(
                "validation_size must be at least 1".into(),
            ));
        }
        if !non_negative_finite(self.class_separation) {
            return Err(Error::InvalidParameter(format!(
                "class_separation must be non-negative, got {}",
                self.class_separation
            )));
        }
        Ok(())
    }
}

fn sample_blob<R: Rng>(rng: &mut R, n: usize, spec: &TaskSpec) -> Dataset {
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.random_range(0..spec.num_classes);
        let mut features = Vec::with_capacity(spec.feature_dim);
        for axis in 0..spec.feature_dim {
            let noise: f64 = rng.sample(StandardNormal);
            let shift = if axis == 0 {
                label as f64 * spec.class_separation
            } else {
                0.0
            };
            features.push(shift + noise);
        }
        points.push(DataPoint { features, label });
    }
    Dataset {
        points,
        num_classes: spec.num_classes,
        feature_dim: spec.feature_dim,
    }
}

/// Generates the per-client datasets and the server validation holdout.
///
/// Client `k` draws `samples_per_client[k]` points from its own substream of
/// `spec.seed`, so a client's samples are a prefix-stable sequence: growing
/// or shrinking one client's size never changes another client's data.
pub fn generate_task(spec: &TaskSpec) -> Result<(Vec<Dataset>, Dataset)> {
    spec.validate()?;
    let clients = spec
        .samples_per_client
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let mut rng = derive_rng(spec.seed, &[TAG_CLIENT_DATA, k as u64]);
            sample_blob(&mut rng, n, spec)
        })
        .collect();
    let mut rng = derive_rng(spec.seed, &[TAG_VALIDATION]);
    let validation = sample_blob(&mut rng, spec.validation_size, spec);
    Ok((clients, validation))
}

/// Samples `n` client data sizes from a population distribution.
///
/// Continuous draws are rounded to the nearest integer and floored at 1 so
/// every sampled client can train. `Explicit` returns its list verbatim and
/// requires `n` to match.
pub fn sample_sizes(dist: &SizeDistribution, n: usize, seed: u64) -> Result<Vec<u64>> {
    dist.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter(
            "size sample count must be at least 1".into(),
        ));
    }
    if let SizeDistribution::Explicit(sizes) = dist {
        if sizes.len() != n {
            return Err(Error::InvalidParameter(format!(
                "explicit size list has {} entries but {} clients were requested",
                sizes.len(),
                n
            )));
        }
        return Ok(sizes.clone());
    }
    let mut rng = derive_rng(seed, &[TAG_SIZES]);
    let draws: Vec<f64> = match *dist {
        SizeDistribution::Uniform { d_max } => {
            (0..n).map(|_| rng.random::<f64>() * d_max).collect()
        }
        SizeDistribution::Pareto { shape, scale } => {
            let pareto = Pareto::new(scale, shape)
                .map_err(|e| Error::InvalidParameter(format!("pareto: {e}")))?;
            (0..n).map(|_| pareto.sample(&mut rng)).collect()
        }
        SizeDistribution::Exponential { rate } => {
            let exp =
                Exp::new(rate).map_err(|e| Error::InvalidParameter(format!("exponential: {e}")))?;
            (0..n).map(|_| exp.sample(&mut rng)).collect()
        }
        SizeDistribution::Explicit(_) => unreachable!(),
    };
    Ok(draws
        .into_iter()
        .map(|x| x.round().max(1.0) as u64)
        .collect())
}
