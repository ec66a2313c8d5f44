//! The six expressive gesture parameters, computed per hand over a stroke.
//!
//! All values are stored in SI units (m, m/s, m/s², degrees). Report-time
//! unit conversion (hand opening in centimeters) is [`Parameter::report_scale`].

mod extract;
mod kinematics;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use extract::{extract_all, FrameInterval};
pub use kinematics::{
    arm_swivel, arm_swivel_frames, first_major_peak, hand_opening, initial_acceleration, major_axis_length,
    max_velocity, moving_average, path_length, swivel_angle, wrist_speed, MajorAxisMode, SwivelFrame,
};

use crate::hand::{Hand, HandPair};
use crate::mocap::FkError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("interval spans {0} frames, at least 2 are needed")]
    TooFewFrames(usize),
    #[error("interval [{start_s}, {end_s}] s lies outside the clip (duration {duration_s} s)")]
    IntervalOutsideClip {
        start_s: f64,
        end_s: f64,
        duration_s: f64,
    },
    #[error("empty series")]
    EmptySeries,
    #[error("degenerate arm geometry for the {hand} arm: {reason}")]
    DegenerateSwivel { hand: Hand, reason: &'static str },
    #[error("fingertip or wrist-base role `{0}` is not mapped")]
    MissingFingertip(String),
    #[error(transparent)]
    Trajectory(#[from] FkError),
    #[error("unknown parameter `{0}`; valid names: velocity, initial_acceleration, path_length, major_axis_length, arm_swivel, hand_opening")]
    UnknownParameter(String),
    #[error("parameter file: {0}")]
    Format(String),
}

/// One of the six gesture parameters, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    #[serde(rename = "velocity")]
    MaxVelocity,
    InitialAcceleration,
    PathLength,
    MajorAxisLength,
    ArmSwivel,
    HandOpening,
}

impl Parameter {
    pub const ALL: [Parameter; 6] = [
        Parameter::MaxVelocity,
        Parameter::InitialAcceleration,
        Parameter::PathLength,
        Parameter::MajorAxisLength,
        Parameter::ArmSwivel,
        Parameter::HandOpening,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Parameter::MaxVelocity => "velocity",
            Parameter::InitialAcceleration => "initial_acceleration",
            Parameter::PathLength => "path_length",
            Parameter::MajorAxisLength => "major_axis_length",
            Parameter::ArmSwivel => "arm_swivel",
            Parameter::HandOpening => "hand_opening",
        }
    }

    /// Row label with report units.
    pub fn label(self) -> &'static str {
        match self {
            Parameter::MaxVelocity => "velocity (m/s)",
            Parameter::InitialAcceleration => "initial acceleration (m/s^2)",
            Parameter::PathLength => "path length (m)",
            Parameter::MajorAxisLength => "major axis length (m)",
            Parameter::ArmSwivel => "arm swivel (degrees)",
            Parameter::HandOpening => "hand opening (cm)",
        }
    }

    /// Multiplier from stored SI units to report units.
    pub fn report_scale(self) -> f64 {
        match self {
            Parameter::HandOpening => 100.0,
            _ => 1.0,
        }
    }

    /// Velocity and acceleration models train for fewer epochs.
    pub fn is_kinematic(self) -> bool {
        matches!(self, Parameter::MaxVelocity | Parameter::InitialAcceleration)
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Parameter {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Parameter::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ParamError::UnknownParameter(s.to_string()))
    }
}

/// The six values for one hand.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamValues {
    pub max_velocity: f64,
    pub initial_acceleration: f64,
    pub path_length: f64,
    pub major_axis_length: f64,
    pub arm_swivel: f64,
    pub hand_opening: f64,
}

impl ParamValues {
    pub fn get(&self, p: Parameter) -> f64 {
        match p {
            Parameter::MaxVelocity => self.max_velocity,
            Parameter::InitialAcceleration => self.initial_acceleration,
            Parameter::PathLength => self.path_length,
            Parameter::MajorAxisLength => self.major_axis_length,
            Parameter::ArmSwivel => self.arm_swivel,
            Parameter::HandOpening => self.hand_opening,
        }
    }

    pub fn set(&mut self, p: Parameter, v: f64) {
        match p {
            Parameter::MaxVelocity => self.max_velocity = v,
            Parameter::InitialAcceleration => self.initial_acceleration = v,
            Parameter::PathLength => self.path_length = v,
            Parameter::MajorAxisLength => self.major_axis_length = v,
            Parameter::ArmSwivel => self.arm_swivel = v,
            Parameter::HandOpening => self.hand_opening = v,
        }
    }
}

/// Parameters of one stroke for both hands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureParams {
    pub stroke_id: String,
    pub values: HandPair<ParamValues>,
}

impl GestureParams {
    pub fn get(&self, p: Parameter, hand: Hand) -> f64 {
        self.values.get(hand).get(p)
    }

    pub fn pair(&self, p: Parameter) -> HandPair<f64> {
        self.values.map(|_, v| v.get(p))
    }
}

/// Header of the parameter dump: `stroke_id`, then `<param>_<L|R>` for the
/// six parameters in report order. Units: m/s, m/s², m, m, degrees, m.
pub fn params_csv_header() -> Vec<String> {
    let mut cols = vec!["stroke_id".to_string()];
    for p in Parameter::ALL {
        for h in Hand::BOTH {
            cols.push(format!("{}_{}", p.name(), h.short()));
        }
    }
    cols
}

pub fn write_params_csv(rows: &[GestureParams]) -> String {
    let mut out = params_csv_header().join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.stroke_id);
        for p in Parameter::ALL {
            for h in Hand::BOTH {
                out.push_str(&format!(",{}", r.get(p, h)));
            }
        }
        out.push('\n');
    }
    out
}

pub fn read_params_csv(text: &str) -> Result<Vec<GestureParams>, ParamError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| ParamError::Format(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != params_csv_header() {
        return Err(ParamError::Format("unexpected parameter CSV header".into()));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| ParamError::Format(e.to_string()))?;
        let mut values = HandPair::<ParamValues>::default();
        let mut col = 1;
        for p in Parameter::ALL {
            for h in Hand::BOTH {
                let v: f64 = record
                    .get(col)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| ParamError::Format(format!("bad value in column {col}")))?;
                values.get_mut(h).set(p, v);
                col += 1;
            }
        }
        out.push(GestureParams {
            stroke_id: record[0].to_string(),
            values,
        });
    }
    Ok(out)
}
