//! Mini-batch gradient descent over the fusion model.

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{ConfusionCounts, Metrics};
use super::model::{backward, forward, loss, FusionGrads, FusionParams, TextInput};
use crate::error::{Error, Result};
use crate::features::FEATURE_COUNT;
use crate::scalar::Scalar;

/// A fully prepared example: standardized features plus its text input.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub text: TextInput<T>,
    pub features: [T; FEATURE_COUNT],
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplier on `learning_rate` for the hashed embedding table. Each row
    /// only sees a `1/#ngrams` share of its review's gradient.
    pub embedding_lr_scale: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Defaults to `#negatives / #positives` of the training set.
    pub positive_class_weight: Option<f64>,
    pub seed: u64,
    /// Epochs without validation-F1 improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            embedding_lr_scale: 1.0,
            epochs: 30,
            batch_size: 32,
            positive_class_weight: None,
            seed: 0,
            early_stop_patience: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be finite and non-negative"));
        }
        if !(self.embedding_lr_scale >= 0.0) || !self.embedding_lr_scale.is_finite() {
            return Err(Error::invalid("embedding_lr_scale must be finite and non-negative"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if let Some(w) = self.positive_class_weight {
            if !(w >= 1.0) || !w.is_finite() {
                return Err(Error::invalid("positive_class_weight must be >= 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation: Metrics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub positive_class_weight: f64,
}

impl TrainingHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }
}

pub fn evaluate<T: Scalar>(params: &FusionParams<T>, examples: &[Example<T>]) -> Metrics {
    let counts = examples.iter().fold(ConfusionCounts::default(), |mut c, ex| {
        let e = params.text_embedding(&ex.text);
        let p = forward(&e, &ex.features, params).probability;
        c.record(p >= T::lit(0.5), ex.label);
        c
    });
    Metrics::from_counts(counts)
}

/// Mean weighted loss and gradient over a batch.
pub fn batch_gradient<T: Scalar>(
    params: &FusionParams<T>,
    batch: &[&Example<T>],
    positive_weight: T,
) -> (T, FusionGrads<T>) {
    let mut grads = FusionGrads::zeros_like(params);
    let mut total = T::zero();
    let n = T::from_usize_lossy(batch.len().max(1));
    for ex in batch {
        let e = params.text_embedding(&ex.text);
        let fwd = forward(&e, &ex.features, params);
        let (l, dlogit) = loss(fwd.probability, ex.label, positive_weight);
        total += l;
        backward(&fwd, &ex.text, params, dlogit / n, &mut grads);
    }
    (total / n, grads)
}

/// One descent step; embedding rows move with `embedding_lr`.
pub fn apply_gradient<T: Scalar>(params: &mut FusionParams<T>, grads: &FusionGrads<T>, lr: T, embedding_lr: T) {
    fn step<T: Scalar>(p: &mut [T], g: &[T], lr: T) {
        for (p, &g) in p.iter_mut().zip(g) {
            *p -= lr * g;
        }
    }
    step(params.feature_tokens.as_mut_slice(), grads.feature_tokens.as_slice(), lr);
    step(params.w_query.as_mut_slice(), grads.w_query.as_slice(), lr);
    step(params.w_key.as_mut_slice(), grads.w_key.as_slice(), lr);
    step(params.w_value.as_mut_slice(), grads.w_value.as_slice(), lr);
    step(&mut params.head, &grads.head, lr);
    params.bias -= lr * grads.bias;
    if let Some(table) = params.embedding.as_mut() {
        for (&row, g) in &grads.embedding_rows {
            step(table.row_mut(row), g, embedding_lr);
        }
    }
}

/// Trains from `params` and returns the parameters of the epoch with the
/// best validation F1 (earliest on ties). When `validation` is empty the
/// training set is scored instead.
pub fn train<T: Scalar>(
    mut params: FusionParams<T>,
    train_set: &[Example<T>],
    validation: &[Example<T>],
    config: &TrainConfig,
) -> Result<(FusionParams<T>, TrainingHistory)> {
    config.validate()?;
    params.validate()?;
    let positives = train_set.iter().filter(|e| e.label).count();
    let negatives = train_set.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass { positives, negatives });
    }
    let weight = config
        .positive_class_weight
        .unwrap_or_else(|| (negatives as f64 / positives as f64).max(1.0));
    let weight_t = T::lit(weight);
    let lr = T::lit(config.learning_rate);
    let embedding_lr = T::lit(config.learning_rate * config.embedding_lr_scale);
    let scored = if validation.is_empty() { train_set } else { validation };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainingHistory { epochs: Vec::new(), best_epoch: 0, positive_class_weight: weight };
    let mut best: Option<(f64, FusionParams<T>)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Example<T>> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (l, grads) = batch_gradient(&params, &batch, weight_t);
            let l = l.as_f64();
            if !l.is_finite() {
                return Err(Error::Divergence { epoch, batch: b, loss: l });
            }
            epoch_loss += l * chunk.len() as f64;
            apply_gradient(&mut params, &grads, lr, embedding_lr);
        }
        let validation_metrics = evaluate(&params, scored);
        let train_loss = epoch_loss / train_set.len() as f64;
        debug!("epoch {epoch}: loss {train_loss:.5}, validation f1 {:.4}", validation_metrics.f1);
        history.epochs.push(EpochRecord { epoch, train_loss, validation: validation_metrics });

        let improved = best.as_ref().is_none_or(|(f1, _)| validation_metrics.f1 > *f1);
        if improved {
            best = Some((validation_metrics.f1, params.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if config.early_stop_patience > 0 && since_best >= config.early_stop_patience {
                break;
            }
        }
    }
    let (_, best_params) = best.expect("at least one epoch ran");
    Ok((best_params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::model::{AttentionConfig, Variant};

    fn toy(n: usize) -> Vec<Example<f64>> {
        // label depends on the sign of feature 4 plus a bucket marker
        (0..n)
            .map(|i| {
                let x = ((i * 37) % 17) as f64 / 8.0 - 1.0;
                let mut f = [0.0; FEATURE_COUNT];
                f[4] = x;
                f[0] = if i % 3 == 0 { 1.0 } else { -1.0 };
                Example { text: TextInput::Hashed(vec![i % 5, 10 + i % 7]), features: f, label: x > 0.05 }
            })
            .collect()
    }

    fn params() -> FusionParams<f64> {
        FusionParams::init(Variant::All, 4, AttentionConfig { feature_dim: 3, key_dim: 3, value_dim: 3 }, Some(1024), 1)
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 3, ..Default::default() };
        let p0 = params();
        let (p, h) = train(p0.clone(), &toy(60), &toy(20), &cfg).unwrap();
        assert_eq!(p, p0);
        assert_eq!(h.epochs.len(), 3);
    }

    #[test]
    fn deterministic_history() {
        let cfg = TrainConfig { learning_rate: 0.1, epochs: 4, batch_size: 8, ..Default::default() };
        let a = train(params(), &toy(80), &toy(30), &cfg).unwrap();
        let b = train(params(), &toy(80), &toy(30), &cfg).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn learns_a_separable_toy_problem() {
        let cfg = TrainConfig { learning_rate: 0.5, epochs: 40, batch_size: 8, ..Default::default() };
        let (p, h) = train(params(), &toy(200), &toy(60), &cfg).unwrap();
        assert!(evaluate(&p, &toy(60)).f1 > 0.9, "{:?}", h.best());
    }

    #[test]
    fn single_class_and_divergence_are_errors() {
        let mut data = toy(20);
        data.iter_mut().for_each(|e| e.label = false);
        assert!(matches!(train(params(), &data, &[], &TrainConfig::default()), Err(Error::SingleClass { .. })));
        let cfg = TrainConfig { learning_rate: 1e300, epochs: 5, ..Default::default() };
        assert!(matches!(train(params(), &toy(40), &[], &cfg), Err(Error::Divergence { .. })));
    }

    #[test]
    fn early_stopping_caps_epochs() {
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 50, early_stop_patience: 2, ..Default::default() };
        let (_, h) = train(params(), &toy(40), &toy(10), &cfg).unwrap();
        assert_eq!(h.epochs.len(), 3);
        assert_eq!(h.best_epoch, 1);
    }
}
