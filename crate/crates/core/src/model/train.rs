use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{loss_and_gradients, Batch, DropoutMasks, Network, Weights};
use super::{Checkpoint, ModelConfig, ModelError};
use crate::audio::FeatureMatrix;

/// Per-output min-max scaling fitted on the training targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetNormalizer {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl TargetNormalizer {
    /// Ranges narrower than this are treated as 1 to avoid dividing by zero.
    pub const MIN_RANGE: f64 = 1e-12;

    pub fn fit(targets: &[[f64; 2]]) -> Result<Self, ModelError> {
        if targets.is_empty() {
            return Err(ModelError::EmptySet("target"));
        }
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for t in targets {
            for k in 0..2 {
                min[k] = min[k].min(t[k]);
                max[k] = max[k].max(t[k]);
            }
        }
        Ok(Self { min, max })
    }

    fn range(&self, k: usize) -> f64 {
        let r = self.max[k] - self.min[k];
        if r < Self::MIN_RANGE {
            1.0
        } else {
            r
        }
    }

    pub fn normalize(&self, v: [f64; 2]) -> [f64; 2] {
        [0, 1].map(|k| (v[k] - self.min[k]) / self.range(k))
    }

    pub fn denormalize(&self, v: [f64; 2]) -> [f64; 2] {
        [0, 1].map(|k| self.min[k] + v[k] * self.range(k))
    }
}

/// One training example: a padded window and its normalized targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub stroke_id: String,
    pub features: FeatureMatrix,
    pub target: [f64; 2],
}

/// Adam with bias correction and no learning-rate schedule.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Weights,
    v: Weights,
}

impl Adam {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Weights::zeros(cfg),
            v: Weights::zeros(cfg),
        }
    }

    pub fn step(&mut self, weights: &mut Weights, grad: &Weights) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let grads = grad.tensors();
        for (((w, m), v), (_, _, g)) in weights
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(grads)
        {
            for i in 0..w.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                w[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mse: f64,
    pub validation_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MSE (epoch 0 is
    /// the initialization).
    pub network: Network,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn log_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,validation_mse\n");
        for e in &self.log {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_mse, e.validation_mse));
        }
        out
    }
}

fn batch_of(samples: &[&Sample]) -> Result<(Batch, Array2<f64>), ModelError> {
    let windows: Vec<&FeatureMatrix> = samples.iter().map(|s| &s.features).collect();
    let batch = Batch::from_windows(&windows)?;
    let targets = Array2::from_shape_fn((samples.len(), 2), |(b, k)| samples[b].target[k]);
    Ok((batch, targets))
}

/// Infer-mode mean squared error over a sample set.
pub fn evaluate_mse(net: &Network, samples: &[Sample]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for chunk in samples.chunks(net.config.batch_size) {
        let windows: Vec<&FeatureMatrix> = chunk.iter().map(|s| &s.features).collect();
        let out = net.infer(&Batch::from_windows(&windows)?)?;
        for (o, s) in out.iter().zip(chunk) {
            total += (o[0] - s.target[0]).powi(2) + (o[1] - s.target[1]).powi(2);
        }
    }
    Ok(total / (2 * samples.len()) as f64)
}

/// Trains for `config.epochs` epochs and keeps the best-validation weights.
/// Initialization, batch order and dropout masks all come from one
/// generator seeded with `config.seed`.
pub fn train(config: &ModelConfig, train_set: &[Sample], validation: &[Sample]) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(ModelError::EmptySet("training"));
    }
    if validation.is_empty() {
        return Err(ModelError::EmptySet("validation"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = Network::new(config.clone(), Weights::init(config, &mut rng));
    let mut adam = Adam::new(config);

    let initial_val = evaluate_mse(&net, validation)?;
    let mut log = vec![EpochLog {
        epoch: 0,
        train_mse: f64::NAN,
        validation_mse: initial_val,
    }];
    let mut best = (initial_val, 0, net.clone());
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for idx in order.chunks(config.batch_size) {
            let samples: Vec<&Sample> = idx.iter().map(|&i| &train_set[i]).collect();
            let (batch, targets) = batch_of(&samples)?;
            let masks = DropoutMasks::sample(samples.len(), config, &mut rng);
            let (loss, grad, fwd) = match loss_and_gradients(&net, &batch, &targets, &masks) {
                Ok(r) => r,
                Err(ModelError::NonFinite { .. }) => return Err(ModelError::Diverged { epoch }),
                Err(e) => return Err(e),
            };
            net.running.update(&fwd);
            adam.step(&mut net.weights, &grad);
            sum += loss * samples.len() as f64;
        }
        let train_mse = sum / train_set.len() as f64;
        let validation_mse = match evaluate_mse(&net, validation) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(ModelError::NonFinite { .. }) => return Err(ModelError::Diverged { epoch }),
            Err(e) => return Err(e),
        };
        log::debug!("epoch {epoch}: train {train_mse:.6} validation {validation_mse:.6}");
        log.push(EpochLog {
            epoch,
            train_mse,
            validation_mse,
        });
        if validation_mse < best.0 {
            best = (validation_mse, epoch, net.clone());
        }
    }
    Ok(TrainOutcome {
        network: best.2,
        best_epoch: best.1,
        log,
    })
}

/// Infer-mode predictions in physical units, `[left, right]` per window.
pub fn predict(checkpoint: &Checkpoint, windows: &[&FeatureMatrix]) -> Result<Vec<[f64; 2]>, ModelError> {
    let normalizer = checkpoint
        .target_normalizer
        .as_ref()
        .ok_or_else(|| ModelError::Checkpoint("no target normalizer stored".into()))?;
    let net = checkpoint.network()?;
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(net.config.batch_size) {
        for raw in net.infer(&Batch::from_windows(chunk)?)? {
            out.push(normalizer.denormalize(raw));
        }
    }
    Ok(out)
}
