//! Per-hand parameter computations over position series already cut to the
//! stroke interval.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::ParamError;
use crate::constants::{MAJOR_PEAK_FRACTION, SPEED_SMOOTHING_FRAMES};
use crate::hand::Hand;

type V3 = Vector3<f64>;

/// Minimum shoulder-wrist distance for the swivel axis to be defined.
const MIN_ARM_SPAN_M: f64 = 0.01;
const DEGENERATE_NORM: f64 = 1e-9;

/// Centered moving average. The series is extended past each end by point
/// reflection (`2 p[0] - p[k]`), which leaves linear motion untouched.
pub fn moving_average(points: &[V3], window: usize) -> Vec<V3> {
    let n = points.len();
    if n < 2 || window < 2 {
        return points.to_vec();
    }
    let half = (window / 2).min(n - 1);
    let at = |i: isize| -> V3 {
        if i < 0 {
            2.0 * points[0] - points[(-i) as usize]
        } else if i as usize >= n {
            let k = i as usize - (n - 1);
            2.0 * points[n - 1] - points[n - 1 - k]
        } else {
            points[i as usize]
        }
    };
    (0..n as isize)
        .map(|t| {
            let sum: V3 = (-(half as isize)..=half as isize).map(|k| at(t + k)).sum();
            sum / (2 * half + 1) as f64
        })
        .collect()
}

/// Frame-to-frame speed (m/s) of the smoothed series; one shorter than the input.
pub fn wrist_speed(points: &[V3], frame_time: f64) -> Result<Vec<f64>, ParamError> {
    if points.len() < 2 {
        return Err(ParamError::TooFewFrames(points.len()));
    }
    let smooth = moving_average(points, SPEED_SMOOTHING_FRAMES);
    Ok(smooth.windows(2).map(|w| (w[1] - w[0]).norm() / frame_time).collect())
}

pub fn max_velocity(speed: &[f64]) -> Result<f64, ParamError> {
    speed
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(ParamError::EmptySeries)
}

/// Index of the first major speed peak: the first local maximum reaching
/// `MAJOR_PEAK_FRACTION` of the global maximum, else the global argmax.
/// A local maximum rises strictly from its left neighbour and does not fall
/// below its right one; the last sample counts if it rises.
pub fn first_major_peak(speed: &[f64]) -> usize {
    let n = speed.len();
    let global = speed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let is_local_max = |t: usize| {
        speed[t] > speed[t - 1] && (t + 1 == n || speed[t] >= speed[t + 1])
    };
    (1..n)
        .find(|&t| is_local_max(t) && speed[t] >= MAJOR_PEAK_FRACTION * global)
        .unwrap_or_else(|| {
            speed
                .iter()
                .enumerate()
                .fold(0, |best, (i, &v)| if v > speed[best] { i } else { best })
        })
}

/// Mean acceleration (m/s²) from the first speed sample to the first major peak.
pub fn initial_acceleration(speed: &[f64], frame_time: f64) -> Result<f64, ParamError> {
    if speed.len() < 2 {
        return Err(ParamError::TooFewFrames(speed.len()));
    }
    let t = first_major_peak(speed);
    if t == 0 {
        return Ok(0.0);
    }
    Ok((speed[t] - speed[0]) / (t as f64 * frame_time))
}

/// Summed frame-to-frame distance of the raw positions.
pub fn path_length(points: &[V3]) -> Result<f64, ParamError> {
    if points.len() < 2 {
        return Err(ParamError::TooFewFrames(points.len()));
    }
    Ok(points.windows(2).map(|w| (w[1] - w[0]).norm()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MajorAxisMode {
    /// Largest distance between any two positions.
    #[default]
    FarthestPair,
    /// Diagonal of the axis-aligned bounding box of the positions.
    BoundingBoxDiagonal,
}

pub fn major_axis_length(points: &[V3], mode: MajorAxisMode) -> Result<f64, ParamError> {
    if points.is_empty() {
        return Err(ParamError::EmptySeries);
    }
    Ok(match mode {
        MajorAxisMode::FarthestPair => {
            let mut best = 0.0f64;
            for (i, a) in points.iter().enumerate() {
                for b in &points[i + 1..] {
                    best = best.max((b - a).norm_squared());
                }
            }
            best.sqrt()
        }
        MajorAxisMode::BoundingBoxDiagonal => {
            let mut lo = points[0];
            let mut hi = points[0];
            for p in points {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            (hi - lo).norm()
        }
    })
}

/// Outcome of the swivel computation for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SwivelFrame {
    Angle(f64),
    /// Wrist within 1 cm of the shoulder.
    ShortArm,
    /// Elbow on the shoulder-wrist axis, or that axis vertical.
    Degenerate,
}

/// Signed elbow rotation (degrees) about the shoulder-wrist axis, measured
/// from world-down projected off that axis. World up is +Y.
pub fn swivel_angle(shoulder: &V3, elbow: &V3, wrist: &V3) -> SwivelFrame {
    let axis = wrist - shoulder;
    if axis.norm() <= MIN_ARM_SPAN_M {
        return SwivelFrame::ShortArm;
    }
    let a = axis.normalize();
    let rel = elbow - shoulder;
    let e = rel - a * a.dot(&rel);
    let down = V3::new(0.0, -1.0, 0.0);
    let r = down - a * a.dot(&down);
    if e.norm() < DEGENERATE_NORM || r.norm() < DEGENERATE_NORM {
        return SwivelFrame::Degenerate;
    }
    let r = r.normalize();
    SwivelFrame::Angle(a.dot(&r.cross(&e)).atan2(r.dot(&e)).to_degrees())
}

pub fn arm_swivel_frames(shoulder: &[V3], elbow: &[V3], wrist: &[V3]) -> Vec<SwivelFrame> {
    shoulder
        .iter()
        .zip(elbow)
        .zip(wrist)
        .map(|((s, e), w)| swivel_angle(s, e, w))
        .collect()
}

/// Mean swivel over frames with well-defined geometry.
pub fn arm_swivel(hand: Hand, shoulder: &[V3], elbow: &[V3], wrist: &[V3]) -> Result<f64, ParamError> {
    let frames = arm_swivel_frames(shoulder, elbow, wrist);
    if frames.is_empty() {
        return Err(ParamError::EmptySeries);
    }
    let long_enough = frames.iter().filter(|f| !matches!(f, SwivelFrame::ShortArm)).count();
    if 2 * long_enough < frames.len() {
        return Err(ParamError::DegenerateSwivel {
            hand,
            reason: "wrist within 1 cm of the shoulder on most frames",
        });
    }
    let angles: Vec<f64> = frames
        .iter()
        .filter_map(|f| match f {
            SwivelFrame::Angle(a) => Some(*a),
            _ => None,
        })
        .collect();
    if angles.is_empty() {
        return Err(ParamError::DegenerateSwivel {
            hand,
            reason: "elbow on the shoulder-wrist axis or arm along the vertical on every frame",
        });
    }
    Ok(angles.iter().sum::<f64>() / angles.len() as f64)
}

/// Mean over frames of the mean fingertip distance from the wrist base.
pub fn hand_opening(wrist_base: &[V3], tips: [&[V3]; 4]) -> Result<f64, ParamError> {
    if wrist_base.is_empty() {
        return Err(ParamError::EmptySeries);
    }
    let total: f64 = wrist_base
        .iter()
        .enumerate()
        .map(|(t, base)| tips.iter().map(|tip| (tip[t] - base).norm()).sum::<f64>() / 4.0)
        .sum();
    Ok(total / wrist_base.len() as f64)
}
