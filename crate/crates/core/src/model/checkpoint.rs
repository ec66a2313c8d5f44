use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Network, RunningStats, Weights};
use super::{ModelConfig, ModelError, TargetNormalizer};
use crate::audio::FeatureNormalizer;
use crate::params::Parameter;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Self-describing JSON container for a trained model. Floats are written
/// with shortest round-trip formatting, so save-then-load is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub parameter: Option<Parameter>,
    pub feature_set: String,
    pub config: ModelConfig,
    pub tensors: BTreeMap<String, TensorRecord>,
    pub running: RunningStats,
    pub target_normalizer: Option<TargetNormalizer>,
    pub feature_normalizer: Option<FeatureNormalizer>,
    pub seed: u64,
    pub epoch: usize,
}

impl Checkpoint {
    pub fn from_network(net: &Network, epoch: usize) -> Self {
        let tensors = net
            .weights
            .tensors()
            .into_iter()
            .map(|(name, shape, data)| {
                (
                    name.to_string(),
                    TensorRecord {
                        shape,
                        data: data.to_vec(),
                    },
                )
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            parameter: None,
            feature_set: String::new(),
            config: net.config.clone(),
            tensors,
            running: net.running.clone(),
            target_normalizer: None,
            feature_normalizer: None,
            seed: net.config.seed,
            epoch,
        }
    }

    /// Rebuilds the network, checking every tensor shape against the config.
    pub fn network(&self) -> Result<Network, ModelError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        self.config.validate()?;
        let mut weights = Weights::zeros(&self.config);
        let expected: Vec<(&str, Vec<usize>)> = weights
            .tensors()
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .collect();
        for ((name, shape), slot) in expected.into_iter().zip(weights.tensors_mut()) {
            let rec = self
                .tensors
                .get(name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor `{name}`")))?;
            if rec.shape != shape || rec.data.len() != slot.len() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, config implies {shape:?}",
                    rec.shape
                )));
            }
            slot.copy_from_slice(&rec.data);
        }
        let r = &self.running;
        let (d, h2) = (self.config.input_dim, 2 * self.config.hidden_size);
        if r.bn1_mean.len() != d || r.bn1_var.len() != d || r.bn2_mean.len() != h2 || r.bn2_var.len() != h2 {
            return Err(ModelError::Checkpoint("running statistics do not match config".into()));
        }
        Ok(Network {
            config: self.config.clone(),
            weights,
            running: self.running.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let ck: Self = serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        ck.network()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
