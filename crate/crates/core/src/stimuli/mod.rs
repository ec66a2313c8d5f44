//! Percentile bands, biased selection of short sequences, and
//! trajectory-level edits of single parameters with re-extraction.

mod bands;
mod export;
mod manipulate;
mod plan;
mod select;
mod verify;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bands::{classify, compute_bands, expression_sign, nearest_rank, Band, PercentileBands, DEFAULT_TARGET_FRACTION};
pub use export::{export_sequence_motion, spatial_error, ExportedMotion};
pub use manipulate::{
    apply_manipulation, rotate_swivel, scale_opening, scale_size, warp_ramp, warp_uniform, FrameSource,
    ManipulationResult, MANIPULABLE,
};
pub use plan::{
    build_plan, execute_plan, EditedSequence, PlanConfig, PlannedWindow, SkippedStroke, StimulusPlan, StrokeTarget,
};
pub use select::{candidate_windows, select_sequences, CandidateWindow, ClassifiedStroke, SelectionConfig};
pub use verify::{verify_plan, VerificationItem, VerificationReport};

use crate::hand::Hand;
use crate::mocap::FkError;
use crate::params::{ParamError, Parameter};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StimulusError {
    #[error("percentile bands need at least 4 samples, got {0}")]
    TooFewSamples(usize),
    #[error("only {eligible} eligible windows, {needed} requested")]
    TooFewWindows { eligible: usize, needed: usize },
    #[error("no room beyond the band edge for {parameter} ({hand} hand): the observed extreme equals the edge")]
    NoRoom { parameter: Parameter, hand: Hand },
    #[error("current {parameter} is about zero for the {hand} hand, so a ratio edit is undefined")]
    ZeroCurrent { parameter: Parameter, hand: Hand },
    #[error("target {target} for {parameter} ({hand} hand) lies outside the natural range [{min}, {max}]")]
    OutsideLimits {
        parameter: Parameter,
        hand: Hand,
        target: f64,
        min: f64,
        max: f64,
    },
    #[error("unknown stroke `{0}`")]
    UnknownStroke(String),
    #[error("no trajectory for clip `{0}`")]
    UnknownClip(String),
    #[error("unknown direction `{0}` (increase or decrease expected)")]
    Direction(String),
    #[error("motion export: {0}")]
    Export(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Trajectory(#[from] FkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increase,
    Decrease,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Increase, Direction::Decrease];

    /// Class the source windows should be rich in.
    pub fn preferred(self) -> ExpressionClass {
        match self {
            Direction::Increase => ExpressionClass::Low,
            Direction::Decrease => ExpressionClass::High,
        }
    }

    /// Class the edits aim for; windows containing it are skipped.
    pub fn target_class(self) -> ExpressionClass {
        match self {
            Direction::Increase => ExpressionClass::High,
            Direction::Decrease => ExpressionClass::Low,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Increase => "increase",
            Direction::Decrease => "decrease",
        })
    }
}

impl FromStr for Direction {
    type Err = StimulusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "increase" => Ok(Direction::Increase),
            "decrease" => Ok(Direction::Decrease),
            other => Err(StimulusError::Direction(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpressionClass {
    Low,
    Medium,
    High,
}

impl fmt::Display for ExpressionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExpressionClass::Low => "low",
            ExpressionClass::Medium => "medium",
            ExpressionClass::High => "high",
        })
    }
}
