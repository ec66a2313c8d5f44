//! Run configuration read from TOML: input and output locations, the joint
//! map, the feature set, seeds, per-dataset unit overrides and one
//! `[constants]` table with every tunable number of the method.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{FeatureSet, MfccConfig, PitchConfig};
use crate::constants as c;
use crate::corpus::synth::synthetic_skeleton;
use crate::eval::{BaselineConfig, Restriction};
use crate::mocap::JointMap;
use crate::model::ModelConfig;
use crate::params::{MajorAxisMode, Parameter};
use crate::stimuli::{PlanConfig, SelectionConfig, DEFAULT_TARGET_FRACTION};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("constant `{name}` is fixed at {fixed} and cannot be overridden (got {got})")]
    Fixed { name: &'static str, fixed: f64, got: f64 },
    #[error("invalid value for `{name}`: {message}")]
    Invalid { name: &'static str, message: String },
}

/// Named constants. Frame geometry, speed smoothing, the peak rule, the
/// band percentiles, the path-length divisor and alpha are baked into the
/// extraction and evaluation code and must keep their defaults; the rest
/// may be overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constants {
    pub hop_s: f64,
    pub max_input_s: f64,
    pub context_s: f64,
    pub log_floor: f64,
    pub voicing_threshold: f64,
    pub speed_smoothing_frames: usize,
    pub major_peak_fraction: f64,

    pub ff_size: usize,
    pub hidden_size: usize,
    pub input_dropout: f64,
    pub output_dropout: f64,
    pub learning_rate: f64,
    pub epochs_kinematic: usize,
    pub epochs_other: usize,
    pub batch_size: usize,

    pub validation_fraction: f64,
    pub test_fraction: f64,

    pub path_length_std_divisor: f64,
    pub baseline_repeats: usize,
    pub bonferroni_tests: usize,
    pub significance_alpha: f64,

    pub low_percentile: f64,
    pub high_percentile: f64,
    pub stimulus_window_s: f64,
    pub stimulus_grid_s: f64,
    pub stimuli_per_direction: usize,
    /// Where inside the target band an edit aims: 0 at the band edge, 1 at
    /// the observed extreme.
    pub target_fraction: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            hop_s: c::HOP_S,
            max_input_s: c::MAX_INPUT_S,
            context_s: c::CONTEXT_S,
            log_floor: c::LOG_FLOOR,
            voicing_threshold: c::VOICING_THRESHOLD,
            speed_smoothing_frames: c::SPEED_SMOOTHING_FRAMES,
            major_peak_fraction: c::MAJOR_PEAK_FRACTION,
            ff_size: c::FF_SIZE,
            hidden_size: c::HIDDEN_SIZE,
            input_dropout: c::INPUT_DROPOUT,
            output_dropout: c::OUTPUT_DROPOUT,
            learning_rate: c::LEARNING_RATE,
            epochs_kinematic: c::EPOCHS_KINEMATIC,
            epochs_other: c::EPOCHS_OTHER,
            batch_size: c::BATCH_SIZE,
            validation_fraction: c::VALIDATION_FRACTION,
            test_fraction: c::TEST_FRACTION,
            path_length_std_divisor: c::PATH_LENGTH_STD_DIVISOR,
            baseline_repeats: c::BASELINE_REPEATS,
            bonferroni_tests: c::BONFERRONI_TESTS,
            significance_alpha: c::SIGNIFICANCE_ALPHA,
            low_percentile: c::LOW_PERCENTILE,
            high_percentile: c::HIGH_PERCENTILE,
            stimulus_window_s: c::STIMULUS_WINDOW_S,
            stimulus_grid_s: c::STIMULUS_GRID_S,
            stimuli_per_direction: c::STIMULI_PER_DIRECTION,
            target_fraction: DEFAULT_TARGET_FRACTION,
        }
    }
}

impl Constants {
    fn fixed_values(&self) -> [(&'static str, f64); 9] {
        [
            ("hop_s", self.hop_s),
            ("max_input_s", self.max_input_s),
            ("context_s", self.context_s),
            ("speed_smoothing_frames", self.speed_smoothing_frames as f64),
            ("major_peak_fraction", self.major_peak_fraction),
            ("path_length_std_divisor", self.path_length_std_divisor),
            ("significance_alpha", self.significance_alpha),
            ("low_percentile", self.low_percentile),
            ("high_percentile", self.high_percentile),
        ]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let defaults = Constants::default();
        for ((name, got), (_, fixed)) in self.fixed_values().into_iter().zip(defaults.fixed_values()) {
            if got != fixed {
                return Err(ConfigError::Fixed { name, fixed, got });
            }
        }
        if self.bonferroni_tests == 0 {
            return Err(ConfigError::Invalid {
                name: "bonferroni_tests",
                message: "must be at least 1".into(),
            });
        }
        if !(self.log_floor > 0.0) {
            return Err(ConfigError::Invalid {
                name: "log_floor",
                message: "must be positive".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.voicing_threshold) {
            return Err(ConfigError::Invalid {
                name: "voicing_threshold",
                message: "must lie in [0, 1]".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.target_fraction) {
            return Err(ConfigError::Invalid {
                name: "target_fraction",
                message: "must lie in [0, 1]".into(),
            });
        }
        if self.baseline_repeats == 0 || self.stimuli_per_direction == 0 {
            return Err(ConfigError::Invalid {
                name: "baseline_repeats",
                message: "repeat and stimulus counts must be at least 1".into(),
            });
        }
        self.model(Parameter::PathLength, 1, 0)
            .validate()
            .map_err(|e| ConfigError::Invalid {
                name: "model",
                message: e.to_string(),
            })
    }

    /// Hyperparameters for the model of `parameter`.
    pub fn model(&self, parameter: Parameter, input_dim: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            input_dim,
            ff_size: self.ff_size,
            hidden_size: self.hidden_size,
            input_dropout: self.input_dropout,
            output_dropout: self.output_dropout,
            learning_rate: self.learning_rate,
            epochs: if parameter.is_kinematic() {
                self.epochs_kinematic
            } else {
                self.epochs_other
            },
            batch_size: self.batch_size,
            seed,
        }
    }

    pub fn mfcc(&self) -> MfccConfig {
        MfccConfig {
            log_floor: self.log_floor,
            ..MfccConfig::default()
        }
    }

    pub fn pitch(&self) -> PitchConfig {
        PitchConfig {
            voicing_threshold: self.voicing_threshold,
            ..PitchConfig::default()
        }
    }

    pub fn baseline(&self, parameter: Parameter, seed: u64) -> BaselineConfig {
        BaselineConfig {
            repeats: self.baseline_repeats,
            ..BaselineConfig::new(Restriction::for_parameter(parameter), seed)
        }
    }

    pub fn plan(&self, seed: u64) -> PlanConfig {
        PlanConfig {
            selection: SelectionConfig {
                k: self.stimuli_per_direction,
                window_s: self.stimulus_window_s,
                grid_s: self.stimulus_grid_s,
                seed,
            },
            target_fraction: self.target_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub split: u64,
    pub model: u64,
    pub baseline: u64,
    pub stimuli: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            split: 7,
            model: 1,
            baseline: 11,
            stimuli: 3,
        }
    }
}

impl Seeds {
    /// Every seed set to `seed`.
    pub fn all(seed: u64) -> Self {
        Self {
            split: seed,
            model: seed,
            baseline: seed,
            stimuli: seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StimuliConfig {
    /// Restrict selection to these datasets (empty keeps all).
    pub datasets: Vec<String>,
    /// Use only hand-annotated strokes.
    pub hand_labels_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Manifest CSV; relative paths resolve against the config file.
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub feature_set: FeatureSet,
    /// Major axis definition used by `extract`; the bounding-box diagonal is
    /// only for sensitivity checks.
    pub major_axis: MajorAxisMode,
    /// Directory of per-clip feature CSVs for `external_precomputed`,
    /// named `<clip_id>.csv`.
    pub external_features: Option<PathBuf>,
    pub joint_map: JointMap,
    pub seeds: Seeds,
    /// Per-dataset override of the manifest's file-unit scale factor.
    pub scale_factors: BTreeMap<String, f64>,
    pub stimuli: StimuliConfig,
    pub constants: Constants,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("corpus/manifest.csv"),
            out: PathBuf::from("out"),
            feature_set: FeatureSet::MfccPitchEnergy,
            major_axis: MajorAxisMode::FarthestPair,
            external_features: None,
            joint_map: synthetic_skeleton().1,
            seeds: Seeds::default(),
            scale_factors: BTreeMap::new(),
            stimuli: StimuliConfig::default(),
            constants: Constants::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, name: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: name.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file and makes its relative paths relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.manifest);
        fix(&mut self.out);
        if let Some(p) = self.external_features.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.constants.validate()?;
        for (ds, f) in &self.scale_factors {
            if !(*f > 0.0 && f.is_finite()) {
                return Err(ConfigError::Invalid {
                    name: "scale_factors",
                    message: format!("dataset `{ds}` has non-positive factor {f}"),
                });
            }
        }
        if self.feature_set == FeatureSet::ExternalPrecomputed && self.external_features.is_none() {
            return Err(ConfigError::Invalid {
                name: "external_features",
                message: "required for the external_precomputed feature set".into(),
            });
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::parse("", "empty").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.constants.hidden_size, 64);
        assert_eq!(cfg.constants.epochs_kinematic, 70);
        assert_eq!(cfg.constants.epochs_other, 140);
        assert_eq!(cfg.constants.learning_rate, 2e-4);
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.constants.learning_rate = 1e-3;
        cfg.seeds = Seeds::all(5);
        cfg.scale_factors.insert("A".into(), 0.01);
        let back = RunConfig::parse(&cfg.to_toml(), "rt").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn fixed_constants_reject_overrides() {
        let err = RunConfig::parse("[constants]\ncontext_s = 2.0\n", "x").unwrap_err();
        assert!(matches!(err, ConfigError::Fixed { name: "context_s", .. }), "{err}");
        assert!(RunConfig::parse("[constants]\nepochs_other = 3\n", "x").is_ok());
        assert!(RunConfig::parse("[constants]\nnot_a_constant = 3\n", "x").is_err());
    }

    #[test]
    fn epochs_follow_parameter() {
        let k = Constants::default();
        assert_eq!(k.model(Parameter::MaxVelocity, 16, 0).epochs, 70);
        assert_eq!(k.model(Parameter::HandOpening, 16, 0).epochs, 140);
        assert_eq!(k.baseline(Parameter::PathLength, 0).restriction, Restriction::None);
        assert_eq!(k.baseline(Parameter::ArmSwivel, 0).restriction, Restriction::PathLength);
    }
}
