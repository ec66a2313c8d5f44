use nalgebra::Vector3;

use super::kinematics::{
    arm_swivel, hand_opening, initial_acceleration, major_axis_length, max_velocity, path_length,
    wrist_speed, MajorAxisMode,
};
use super::{GestureParams, ParamError, ParamValues};
use crate::corpus::StrokeRecord;
use crate::hand::{Hand, HandPair, JointKind, Role};
use crate::mocap::JointTrajectory;

/// Inclusive frame range `[first, last]` of a stroke.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameInterval {
    pub first: usize,
    pub last: usize,
}

impl FrameInterval {
    /// Frames nearest to the stroke boundaries, clamped to the clip.
    pub fn from_seconds(
        start_s: f64,
        end_s: f64,
        frame_time: f64,
        n_frames: usize,
    ) -> Result<Self, ParamError> {
        let duration_s = (n_frames.saturating_sub(1)) as f64 * frame_time;
        let slack = 0.5 * frame_time;
        if start_s < -slack || end_s > duration_s + slack || !(start_s < end_s) {
            return Err(ParamError::IntervalOutsideClip {
                start_s,
                end_s,
                duration_s,
            });
        }
        let first = (start_s.max(0.0) / frame_time).round() as usize;
        let last = ((end_s / frame_time).round() as usize).min(n_frames - 1);
        if last <= first {
            return Err(ParamError::TooFewFrames(last + 1 - first.min(last + 1)));
        }
        Ok(Self { first, last })
    }

    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn slice<'a, T>(&self, series: &'a [T]) -> &'a [T] {
        &series[self.first..=self.last]
    }
}

fn track<'a>(
    traj: &'a JointTrajectory,
    hand: Hand,
    kind: JointKind,
    iv: &FrameInterval,
) -> Result<&'a [Vector3<f64>], ParamError> {
    Ok(iv.slice(traj.track(Role::new(hand, kind))?))
}

/// The six values for one hand over `iv`.
pub fn hand_params(
    traj: &JointTrajectory,
    hand: Hand,
    iv: &FrameInterval,
    mode: MajorAxisMode,
) -> Result<ParamValues, ParamError> {
    let wrist = track(traj, hand, JointKind::Wrist, iv)?;
    let speed = wrist_speed(wrist, traj.frame_time)?;
    let shoulder = track(traj, hand, JointKind::Shoulder, iv)?;
    let elbow = track(traj, hand, JointKind::Elbow, iv)?;

    let finger = |kind: JointKind| -> Result<&[Vector3<f64>], ParamError> {
        let role = Role::new(hand, kind);
        if !traj.has(role) {
            return Err(ParamError::MissingFingertip(role.to_string()));
        }
        track(traj, hand, kind, iv)
    };
    let base = finger(JointKind::WristBase)?;
    let tips = [
        finger(JointKind::IndexTip)?,
        finger(JointKind::MiddleTip)?,
        finger(JointKind::RingTip)?,
        finger(JointKind::PinkyTip)?,
    ];

    Ok(ParamValues {
        max_velocity: max_velocity(&speed)?,
        initial_acceleration: initial_acceleration(&speed, traj.frame_time)?,
        path_length: path_length(wrist)?,
        major_axis_length: major_axis_length(wrist, mode)?,
        arm_swivel: arm_swivel(hand, shoulder, elbow, wrist)?,
        hand_opening: hand_opening(base, tips)?,
    })
}

/// All six parameters for both hands over exactly the stroke interval.
pub fn extract_all(
    stroke: &StrokeRecord,
    traj: &JointTrajectory,
    mode: MajorAxisMode,
) -> Result<GestureParams, ParamError> {
    let iv = FrameInterval::from_seconds(stroke.start_s, stroke.end_s, traj.frame_time, traj.num_frames())?;
    let values = HandPair::try_from_fn(|hand| hand_params(traj, hand, &iv, mode))?;
    Ok(GestureParams {
        stroke_id: stroke.stroke_id.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_rounding() {
        let iv = FrameInterval::from_seconds(1.0, 2.0, 0.01, 1000).unwrap();
        assert_eq!((iv.first, iv.last, iv.len()), (100, 200, 101));
        let clamped = FrameInterval::from_seconds(9.0, 9.994, 0.01, 1000).unwrap();
        assert_eq!(clamped.last, 999);
        assert!(FrameInterval::from_seconds(1.0, 1.004, 0.01, 1000).is_err());
        assert!(matches!(
            FrameInterval::from_seconds(5.0, 12.0, 0.01, 1000),
            Err(ParamError::IntervalOutsideClip { .. })
        ));
    }
}
