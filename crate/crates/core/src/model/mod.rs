//! Per-parameter sequence regressor:
//! batch norm → linear feed-forward → bidirectional LSTM → batch norm →
//! dropout → affine → sigmoid, predicting one value per hand.
//!
//! Everything is plain `f64` on the CPU. Gradients are computed analytically
//! with backpropagation through time.

mod checkpoint;
mod network;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use network::{
    loss_and_gradients, Batch, DropoutMasks, Forward, LstmWeights, Mode, Network, RunningStats, Weights,
    BN_EPSILON, BN_MOMENTUM,
};
pub use train::{evaluate_mse, predict, train, Adam, EpochLog, Sample, TargetNormalizer, TrainOutcome};

use crate::constants::{
    BATCH_SIZE, EPOCHS_OTHER, FF_SIZE, HIDDEN_SIZE, INPUT_DROPOUT, LEARNING_RATE, OUTPUT_DROPOUT,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite activations in {layer}")]
    NonFinite { layer: &'static str },
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("empty {0} set")]
    EmptySet(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub ff_size: usize,
    pub hidden_size: usize,
    pub input_dropout: f64,
    pub output_dropout: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Published architecture for `input_dim` features.
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            ff_size: FF_SIZE,
            hidden_size: HIDDEN_SIZE,
            input_dropout: INPUT_DROPOUT,
            output_dropout: OUTPUT_DROPOUT,
            learning_rate: LEARNING_RATE,
            epochs: EPOCHS_OTHER,
            batch_size: BATCH_SIZE,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::Config(msg.to_string()));
        if self.input_dim == 0 || self.ff_size == 0 || self.hidden_size == 0 || self.batch_size == 0 {
            return bad("input_dim, ff_size, hidden_size and batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.input_dropout) || !(0.0..1.0).contains(&self.output_dropout) {
            return bad("dropout rates must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}
