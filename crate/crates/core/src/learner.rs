//! Multinomial logistic regression trained with minibatch gradient descent.
//!
//! Deliberately minimal: a convex model whose validation accuracy grows
//! monotonically with training data on the synthetic tasks, whose analytic
//! gradient can be checked against finite differences, and whose parameters
//! average meaningfully — the properties the aggregation mechanism relies on.

use rand::Rng;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{TAG_INIT_MODEL, TAG_TRAIN, derive_rng};
use crate::synthdata::Dataset;
use crate::validate::positive_finite;

/// Flat parameter vector for a `(feature_dim + 1) x num_classes` linear model.
///
/// Layout: class-major, `values[c * (F + 1) + j]` is the weight of feature
/// `j` for class `c`; index `j = F` holds the class bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    values: Vec<f64>,
    feature_dim: usize,
    num_classes: usize,
}

impl ModelParams {
    pub fn from_values(values: Vec<f64>, feature_dim: usize, num_classes: usize) -> Result<Self> {
        let expected = (feature_dim + 1) * num_classes;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "model parameters must be finite".into(),
            ));
        }
        Ok(ModelParams {
            values,
            feature_dim,
            num_classes,
        })
    }

    pub fn zeros(feature_dim: usize, num_classes: usize) -> Self {
        ModelParams {
            values: vec![0.0; (feature_dim + 1) * num_classes],
            feature_dim,
            num_classes,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.feature_dim != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                actual: data.feature_dim,
            });
        }
        if data.num_classes != self.num_classes {
            return Err(Error::DimensionMismatch {
                expected: self.num_classes,
                actual: data.num_classes,
            });
        }
        Ok(())
    }

    fn logits(&self, features: &[f64]) -> Vec<f64> {
        let stride = self.feature_dim + 1;
        (0..self.num_classes)
            .map(|c| {
                let row = &self.values[c * stride..(c + 1) * stride];
                let mut z = row[self.feature_dim];
                for (w, x) in row[..self.feature_dim].iter().zip(features) {
                    z += w * x;
                }
                z
            })
            .collect()
    }

    /// Predicted class: argmax logit, ties resolved to the lowest class index.
    pub fn predict(&self, features: &[f64]) -> usize {
        let logits = self.logits(features);
        let mut best = 0;
        for (c, &z) in logits.iter().enumerate().skip(1) {
            if z > logits[best] {
                best = c;
            }
        }
        best
    }
}

/// Local training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !positive_finite(self.learning_rate) {
            return Err(Error::InvalidParameter(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "batch_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Accuracy and mean cross-entropy of a model on a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Deterministic small-magnitude initialization, uniform in `[-0.01, 0.01]`.
pub fn init_model(feature_dim: usize, num_classes: usize, seed: u64) -> Result<ModelParams> {
    if feature_dim == 0 || num_classes == 0 {
        return Err(Error::InvalidParameter(
            "model dimensions must be positive".into(),
        ));
    }
    let mut rng = derive_rng(seed, &[TAG_INIT_MODEL]);
    let n = (feature_dim + 1) * num_classes;
    let values = (0..n).map(|_| rng.random_range(-0.01..=0.01)).collect();
    ModelParams::from_values(values, feature_dim, num_classes)
}

/// Stable log-sum-exp pieces for one sample: per-class softmax probabilities
/// and the cross-entropy against `label`.
fn softmax_loss(logits: &[f64], label: usize) -> (Vec<f64>, f64) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let denom: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|&e| e / denom).collect();
    let loss = denom.ln() - (logits[label] - max);
    (probs, loss)
}

fn loss_and_gradient_indices(
    model: &ModelParams,
    data: &Dataset,
    indices: &[usize],
) -> (f64, Vec<f64>) {
    let stride = model.feature_dim + 1;
    let mut grad = vec![0.0; model.values.len()];
    let mut total_loss = 0.0;
    let inv_n = 1.0 / indices.len() as f64;
    for &i in indices {
        let point = &data.points[i];
        let logits = model.logits(&point.features);
        let (probs, loss) = softmax_loss(&logits, point.label);
        total_loss += loss;
        for c in 0..model.num_classes {
            let coeff = (probs[c] - if c == point.label { 1.0 } else { 0.0 }) * inv_n;
            let row = &mut grad[c * stride..(c + 1) * stride];
            for (g, x) in row[..model.feature_dim].iter_mut().zip(&point.features) {
                *g += coeff * x;
            }
            row[model.feature_dim] += coeff;
        }
    }
    (total_loss * inv_n, grad)
}

/// Mean cross-entropy over the batch and its exact analytic gradient,
/// flattened in the same layout as [`ModelParams`].
pub fn loss_and_gradient(model: &ModelParams, batch: &Dataset) -> Result<(f64, Vec<f64>)> {
    model.check_dataset(batch)?;
    if batch.is_empty() {
        return Err(Error::EmptyDataset("loss_and_gradient"));
    }
    let indices: Vec<usize> = (0..batch.len()).collect();
    Ok(loss_and_gradient_indices(model, batch, &indices))
}

/// Runs `local_epochs` epochs of minibatch gradient descent and returns the
/// updated parameters; the input model is untouched.
///
/// Batches come from a fresh seeded shuffle each epoch, so the output is a
/// pure function of `(model, dataset, cfg)`.
pub fn local_train(
    model: &ModelParams,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<ModelParams> {
    cfg.validate()?;
    if cfg.local_epochs == 0 {
        return Ok(model.clone());
    }
    model.check_dataset(dataset)?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("local_train with local_epochs > 0"));
    }
    let mut out = model.clone();
    let mut rng = derive_rng(cfg.seed, &[TAG_TRAIN]);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    for _ in 0..cfg.local_epochs {
        indices.shuffle(&mut rng);
        for batch in indices.chunks(cfg.batch_size) {
            let (_, grad) = loss_and_gradient_indices(&out, dataset, batch);
            for (w, g) in out.values.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * g;
            }
        }
    }
    Ok(out)
}

/// Fraction of points whose argmax class matches the label, plus mean loss.
pub fn evaluate(model: &ModelParams, dataset: &Dataset) -> Result<Evaluation> {
    model.check_dataset(dataset)?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("evaluate"));
    }
    let mut correct = 0usize;
    let mut total_loss = 0.0;
    for point in &dataset.points {
        let logits = model.logits(&point.features);
        let (_, loss) = softmax_loss(&logits, point.label);
        total_loss += loss;
        if model.predict(&point.features) == point.label {
            correct += 1;
        }
    }
    Ok(Evaluation {
        accuracy: correct as f64 / dataset.len() as f64,
        loss: total_loss / dataset.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{DataPoint, TaskSpec, generate_task};

    fn balanced_binary() -> Dataset {
        Dataset {
            points: vec![
                DataPoint {
                    features: vec![1.0, -0.5],
                    label: 0,
                },
                DataPoint {
                    features: vec![-2.0, 0.25],
                    label: 1,
                },
                DataPoint {
                    features: vec![0.5, 3.0],
                    label: 0,
                },
                DataPoint {
                    features: vec![1.5, -1.0],
                    label: 1,
                },
            ],
            num_classes: 2,
            feature_dim: 2,
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_model(3, 2, 5).unwrap();
        let b = init_model(3, 2, 5).unwrap();
        let c = init_model(3, 2, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.values().iter().all(|v| v.abs() <= 0.01));
        assert_eq!(a.len(), (3 + 1) * 2);
    }

    #[test]
    fn zero_model_uniform_softmax_loss() {
        let model = ModelParams::zeros(2, 2);
        let (loss, _) = loss_and_gradient(&model, &balanced_binary()).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicated_batch_leaves_loss_and_gradient_unchanged() {
        let model = init_model(2, 2, 1).unwrap();
        let data = balanced_binary();
        let mut doubled = data.clone();
        doubled.points.extend(data.points.clone());
        let (l1, g1) = loss_and_gradient(&model, &data).unwrap();
        let (l2, g2) = loss_and_gradient(&model, &doubled).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let model = ModelParams::zeros(2, 2);
        let empty = Dataset::empty(2, 2);
        assert!(loss_and_gradient(&model, &empty).is_err());
        assert!(evaluate(&model, &empty).is_err());
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let spec = TaskSpec {
            num_classes: 3,
            feature_dim: 4,
            class_separation: 1.5,
            samples_per_client: vec![24],
            validation_size: 1,
            seed: 21,
        };
        let (clients, _) = generate_task(&spec).unwrap();
        let batch = &clients[0];
        for seed in 0..10u64 {
            let model = init_model(4, 3, 100 + seed).unwrap();
            let (_, grad) = loss_and_gradient(&model, batch).unwrap();
            let h = 1e-5;
            for (i, &g) in grad.iter().enumerate() {
                let mut plus = model.clone();
                plus.values_mut()[i] += h;
                let mut minus = model.clone();
                minus.values_mut()[i] -= h;
                let (lp, _) = loss_and_gradient(&plus, batch).unwrap();
                let (lm, _) = loss_and_gradient(&minus, batch).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                assert!(
                    (g - fd).abs() < 1e-4,
                    "component {i}: analytic {g} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn zero_epochs_returns_input() {
        let model = init_model(2, 2, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.1,
            local_epochs: 0,
            batch_size: 4,
            seed: 0,
        };
        let out = local_train(&model, &balanced_binary(), &cfg).unwrap();
        assert_eq!(out, model);
        // zero epochs is fine even with no data
        let empty = Dataset::empty(2, 2);
        assert_eq!(local_train(&model, &empty, &cfg).unwrap(), model);
    }

    #[test]
    fn vanishing_step_is_identity_within_tolerance() {
        let model = init_model(2, 2, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-30,
            local_epochs: 2,
            batch_size: 2,
            seed: 0,
        };
        let out = local_train(&model, &balanced_binary(), &cfg).unwrap();
        for (a, b) in out.values().iter().zip(model.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn training_on_empty_data_rejected() {
        let model = ModelParams::zeros(2, 2);
        let cfg = TrainConfig {
            learning_rate: 0.1,
            local_epochs: 1,
            batch_size: 4,
            seed: 0,
        };
        assert!(local_train(&model, &Dataset::empty(2, 2), &cfg).is_err());
    }

    #[test]
    fn separable_task_reaches_high_training_accuracy() {
        let spec = TaskSpec {
            num_classes: 2,
            feature_dim: 2,
            class_separation: 4.0,
            samples_per_client: vec![500],
            validation_size: 1,
            seed: 17,
        };
        let (clients, _) = generate_task(&spec).unwrap();
        let model = init_model(2, 2, 17).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.1,
            local_epochs: 20,
            batch_size: 32,
            seed: 17,
        };
        let trained = local_train(&model, &clients[0], &cfg).unwrap();
        let eval = evaluate(&trained, &clients[0]).unwrap();
        assert!(eval.accuracy >= 0.95, "training accuracy {}", eval.accuracy);
    }

    #[test]
    fn local_train_is_deterministic() {
        let spec = TaskSpec {
            num_classes: 2,
            feature_dim: 3,
            class_separation: 1.0,
            samples_per_client: vec![64],
            validation_size: 1,
            seed: 9,
        };
        let (clients, _) = generate_task(&spec).unwrap();
        let model = init_model(3, 2, 9).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            local_epochs: 3,
            batch_size: 16,
            seed: 4,
        };
        let a = local_train(&model, &clients[0], &cfg).unwrap();
        let b = local_train(&model, &clients[0], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tie_break_predicts_lowest_class() {
        let model = ModelParams::zeros(2, 2);
        let eval = evaluate(&model, &balanced_binary()).unwrap();
        // all logits equal, so everything predicts class 0 -> half correct
        assert_eq!(eval.accuracy, 0.5);
    }

    #[test]
    fn full_batch_step_never_increases_loss() {
        // descent property at small step size, random instances
        for seed in 0..20u64 {
            let spec = TaskSpec {
                num_classes: 3,
                feature_dim: 3,
                class_separation: 1.0,
                samples_per_client: vec![32],
                validation_size: 1,
                seed: 300 + seed,
            };
            let (clients, _) = generate_task(&spec).unwrap();
            let model = init_model(3, 3, seed).unwrap();
            let (before, grad) = loss_and_gradient(&model, &clients[0]).unwrap();
            let eta = 1e-3;
            let stepped = ModelParams::from_values(
                model
                    .values()
                    .iter()
                    .zip(&grad)
                    .map(|(w, g)| w - eta * g)
                    .collect(),
                3,
                3,
            )
            .unwrap();
            let (after, _) = loss_and_gradient(&stepped, &clients[0]).unwrap();
            assert!(after <= before + 1e-12, "seed {seed}: {before} -> {after}");
        }
    }

    #[test]
    fn oracle_labeled_data_scores_one() {
        let model = init_model(2, 3, 33).unwrap();
        let spec = TaskSpec {
            num_classes: 3,
            feature_dim: 2,
            class_separation: 1.0,
            samples_per_client: vec![100],
            validation_size: 1,
            seed: 33,
        };
        let (clients, _) = generate_task(&spec).unwrap();
        let mut data = clients[0].clone();
        for p in &mut data.points {
            p.label = model.predict(&p.features);
        }
        let eval = evaluate(&model, &data).unwrap();
        assert_eq!(eval.accuracy, 1.0);
    }
}
