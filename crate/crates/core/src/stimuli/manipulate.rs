use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Band, ExpressionClass, StimulusError};
use crate::corpus::StrokeRecord;
use crate::hand::{Hand, HandPair, JointKind, Role};
use crate::mocap::ik::place_elbow;
use crate::mocap::rotation::rodrigues;
use crate::mocap::{FkError, JointTrajectory};
use crate::params::{
    extract_all, first_major_peak, swivel_angle, wrist_speed, FrameInterval, GestureParams, MajorAxisMode,
    ParamError, Parameter, SwivelFrame,
};

type V3 = Vector3<f64>;

/// One representative per editable quantity; size is edited through path
/// length (major axis length edits apply the same transform).
pub const MANIPULABLE: [Parameter; 5] = [
    Parameter::MaxVelocity,
    Parameter::InitialAcceleration,
    Parameter::PathLength,
    Parameter::ArmSwivel,
    Parameter::HandOpening,
];

const MAX_REFINE: usize = 8;
/// Refinement stops once every hand is this close to its target, relative
/// to the interquartile width.
const REFINE_TOLERANCE: f64 = 1e-3;
const ZERO_CURRENT: f64 = 1e-12;

/// For each frame of an edited trajectory, the fractional input frame it was
/// resampled from: one map for the body, one per arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSource {
    pub body: Vec<f64>,
    pub arms: HandPair<Vec<f64>>,
}

impl FrameSource {
    pub fn identity(n_frames: usize) -> Self {
        let ids: Vec<f64> = (0..n_frames).map(|f| f as f64).collect();
        Self {
            body: ids.clone(),
            arms: HandPair::new(ids.clone(), ids),
        }
    }

    pub fn len(&self) -> usize {
        self.body.len()
    }

    pub fn is_empty(&self) -> bool {
        self.body.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        let id = |v: &[f64]| v.iter().enumerate().all(|(i, &x)| x == i as f64);
        id(&self.body) && id(&self.arms.left) && id(&self.arms.right)
    }

    /// Maps through `self` (edited to intermediate) and then `earlier`
    /// (intermediate to original).
    pub fn then(&self, earlier: &FrameSource) -> FrameSource {
        let compose = |outer: &[f64], inner: &[f64]| outer.iter().map(|&x| lerp_scalar(inner, x)).collect();
        FrameSource {
            body: compose(&self.body, &earlier.body),
            arms: HandPair::from_fn(|h| compose(self.arms.get(h), earlier.arms.get(h))),
        }
    }
}

fn lerp_scalar(v: &[f64], x: f64) -> f64 {
    let i = (x.floor() as usize).min(v.len() - 1);
    let a = x - i as f64;
    if a == 0.0 || i + 1 == v.len() {
        v[i]
    } else {
        v[i] * (1.0 - a) + v[i + 1] * a
    }
}

fn lerp_point(v: &[V3], x: f64) -> V3 {
    let i = (x.floor() as usize).min(v.len() - 1);
    let a = x - i as f64;
    if a == 0.0 || i + 1 == v.len() {
        v[i]
    } else {
        v[i] * (1.0 - a) + v[i + 1] * a
    }
}

fn arm_roles(hand: Hand) -> impl Iterator<Item = Role> {
    JointKind::ALL.into_iter().map(move |k| Role::new(hand, k))
}

/// Plays the stroke `1 / duration_factor` times faster (or slower) by
/// resampling every track at a fixed step; frames after the stroke shift
/// accordingly. The last stroke frame is kept, so the final step may be
/// shorter than the rest. Returns the trajectory, the new stroke interval
/// and the frame mapping.
pub fn warp_uniform(
    traj: &JointTrajectory,
    iv: FrameInterval,
    duration_factor: f64,
) -> Result<(JointTrajectory, FrameInterval, FrameSource), StimulusError> {
    let n = (iv.last - iv.first) as f64;
    let step = 1.0 / duration_factor;
    let total = traj.num_frames();
    let mut map: Vec<f64> = (0..iv.first).map(|f| f as f64).collect();
    let mut j = 0usize;
    while (j as f64) * step < n - 1e-6 {
        map.push(iv.first as f64 + j as f64 * step);
        j += 1;
    }
    map.push(iv.last as f64);
    let m = j;
    map.extend((iv.last + 1..total).map(|f| f as f64));
    let tracks: BTreeMap<Role, Vec<V3>> = traj
        .tracks()
        .iter()
        .map(|(role, track)| (*role, map.iter().map(|&x| lerp_point(track, x)).collect()))
        .collect();
    let out = JointTrajectory::new(traj.clip_id.clone(), traj.frame_time, tracks)?;
    let new_iv = FrameInterval {
        first: iv.first,
        last: iv.first + m,
    };
    let source = FrameSource {
        body: map.clone(),
        arms: HandPair::new(map.clone(), map),
    };
    Ok((out, new_iv, source))
}

/// Retimes the speed ramp of each arm: the frames up to the arm's first
/// major speed peak are played `rates` times faster, the rest of the stroke
/// at its original pace. Initial acceleration scales by about `rate²` when
/// speeding up and about `rate` when slowing down. Stroke endpoints stay in
/// place; the stroke lasts as long as the slower arm needs, and the other
/// arm's tail and the body are stretched to match.
pub fn warp_ramp(
    traj: &JointTrajectory,
    iv: FrameInterval,
    rates: HandPair<f64>,
) -> Result<(JointTrajectory, FrameInterval, FrameSource), StimulusError> {
    let n = (iv.last - iv.first) as f64;
    let mut knots = HandPair::new((0.0, 0.0), (0.0, 0.0));
    for hand in Hand::BOTH {
        let wrist = iv.slice(traj.track(Role::new(hand, JointKind::Wrist))?);
        let speed = wrist_speed(wrist, traj.frame_time)?;
        let peak = (first_major_peak(&speed) as f64 + 0.5).min(n - 0.5);
        // The ramp keeps at least one output frame.
        let rate = rates.get(hand).clamp(1e-3, peak);
        *knots.get_mut(hand) = (peak, peak / rate);
    }
    let needed = Hand::BOTH
        .iter()
        .map(|&h| knots.get(h).1 + n - knots.get(h).0)
        .fold(0.0, f64::max);
    let m = ((needed - 1e-6).ceil() as usize).max(1);
    let mf = m as f64;

    let total = traj.num_frames();
    let shift_map = |inner: &dyn Fn(f64) -> f64| -> Vec<f64> {
        let mut map: Vec<f64> = (0..iv.first).map(|f| f as f64).collect();
        map.extend((0..=m).map(|j| iv.first as f64 + inner(j as f64).clamp(0.0, n)));
        map.extend((iv.last + 1..total).map(|f| f as f64));
        map
    };
    let body = shift_map(&|j| j * n / mf);
    let arms = HandPair::from_fn(|h| {
        let (peak, ramp) = *knots.get(h);
        shift_map(&|j| {
            if j <= ramp {
                j * peak / ramp
            } else {
                peak + (j - ramp) * (n - peak) / (mf - ramp)
            }
        })
    });
    // Shoulders ride on the torso, so they follow the body.
    let arm_roles: BTreeMap<Role, Hand> = Hand::BOTH
        .iter()
        .flat_map(|&h| arm_roles(h).filter(|r| r.kind != JointKind::Shoulder).map(move |r| (r, h)))
        .collect();
    let tracks: BTreeMap<Role, Vec<V3>> = traj
        .tracks()
        .iter()
        .map(|(role, track)| {
            let map = match arm_roles.get(role) {
                Some(&h) => arms.get(h),
                None => &body,
            };
            (*role, map.iter().map(|&x| lerp_point(track, x)).collect())
        })
        .collect();
    let out = traj.with_tracks(tracks)?;
    let new_iv = FrameInterval {
        first: iv.first,
        last: iv.first + m,
    };
    Ok((out, new_iv, FrameSource { body, arms }))
}

/// Scales the wrist's displacement from its stroke centroid by `factor`.
/// The elbow is re-placed with the frame's segment lengths and swivel; the
/// hand joints move rigidly with the wrist.
pub fn scale_size(
    traj: &JointTrajectory,
    iv: FrameInterval,
    hand: Hand,
    factor: f64,
) -> Result<JointTrajectory, StimulusError> {
    let role = |k| Role::new(hand, k);
    let shoulder = traj.track(role(JointKind::Shoulder))?.to_vec();
    let elbow = traj.track(role(JointKind::Elbow))?.to_vec();
    let wrist = traj.track(role(JointKind::Wrist))?.to_vec();
    let slice = iv.slice(&wrist);
    let centroid: V3 = slice.iter().sum::<V3>() / slice.len() as f64;
    let mut tracks = traj.tracks().clone();
    for f in iv.first..=iv.last {
        let (s, e, w) = (shoulder[f], elbow[f], wrist[f]);
        let w_new = centroid + (w - centroid) * factor;
        let shift = w_new - w;
        let swivel = match swivel_angle(&s, &e, &w) {
            SwivelFrame::Angle(a) => a,
            _ => 0.0,
        };
        let e_new = place_elbow(&s, &w_new, (e - s).norm(), (w - e).norm(), swivel);
        tracks.get_mut(&role(JointKind::Elbow)).expect("checked above")[f] = e_new;
        for kind in [JointKind::Wrist, JointKind::WristBase]
            .into_iter()
            .chain(JointKind::FINGERTIPS)
        {
            if let Some(t) = tracks.get_mut(&role(kind)) {
                t[f] += shift;
            }
        }
    }
    Ok(traj.with_tracks(tracks)?)
}

/// Rotates the elbow about the shoulder-wrist axis by `delta_deg` on every
/// stroke frame. Segment lengths are unchanged.
pub fn rotate_swivel(
    traj: &JointTrajectory,
    iv: FrameInterval,
    hand: Hand,
    delta_deg: f64,
) -> Result<JointTrajectory, StimulusError> {
    let role = |k| Role::new(hand, k);
    let shoulder = traj.track(role(JointKind::Shoulder))?;
    let wrist = traj.track(role(JointKind::Wrist))?;
    let mut tracks = traj.tracks().clone();
    let elbow = tracks.get_mut(&role(JointKind::Elbow)).ok_or(FkError::MissingRole(role(JointKind::Elbow)))?;
    for f in iv.first..=iv.last {
        let axis = wrist[f] - shoulder[f];
        if axis.norm() < 1e-9 {
            continue;
        }
        let r = rodrigues(&axis.normalize(), delta_deg.to_radians());
        elbow[f] = shoulder[f] + r * (elbow[f] - shoulder[f]);
    }
    Ok(traj.with_tracks(tracks)?)
}

/// Scales each fingertip's offset from the wrist base by `factor`.
pub fn scale_opening(
    traj: &JointTrajectory,
    iv: FrameInterval,
    hand: Hand,
    factor: f64,
) -> Result<JointTrajectory, StimulusError> {
    let base_role = Role::new(hand, JointKind::WristBase);
    if !traj.has(base_role) {
        return Err(ParamError::MissingFingertip(base_role.to_string()).into());
    }
    let base = traj.track(base_role)?.to_vec();
    let mut tracks = traj.tracks().clone();
    for kind in JointKind::FINGERTIPS {
        let role = Role::new(hand, kind);
        let tip = tracks
            .get_mut(&role)
            .ok_or_else(|| ParamError::MissingFingertip(role.to_string()))?;
        for f in iv.first..=iv.last {
            tip[f] = base[f] + (tip[f] - base[f]) * factor;
        }
    }
    Ok(traj.with_tracks(tracks)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipulationResult {
    pub stroke_id: String,
    pub parameter: Parameter,
    /// The stroke with its interval in the edited trajectory.
    pub stroke: StrokeRecord,
    pub original: GestureParams,
    pub target: HandPair<f64>,
    /// All six parameters re-extracted from the edited trajectory.
    pub achieved: GestureParams,
    #[serde(skip)]
    pub trajectory: Option<JointTrajectory>,
    pub frame_source: FrameSource,
    /// Whether positions were edited in place (as opposed to retimed).
    pub spatial: bool,
    /// Final ratio (or degree offset for swivel) per hand.
    pub setting: HandPair<f64>,
    pub iterations: usize,
    pub target_class: HandPair<ExpressionClass>,
    pub in_target_band: HandPair<bool>,
    /// Largest wrist jump between the stroke and its neighbouring frames.
    pub border_jump_m: HandPair<f64>,
}

impl ManipulationResult {
    pub fn original_value(&self, hand: Hand) -> f64 {
        self.original.get(self.parameter, hand)
    }

    pub fn achieved_value(&self, hand: Hand) -> f64 {
        self.achieved.get(self.parameter, hand)
    }

    pub fn trajectory(&self) -> &JointTrajectory {
        self.trajectory.as_ref().expect("trajectory kept in memory")
    }
}

fn neutral(p: Parameter) -> f64 {
    if p == Parameter::ArmSwivel {
        0.0
    } else {
        1.0
    }
}

struct Edit {
    traj: JointTrajectory,
    iv: FrameInterval,
    source: FrameSource,
}

fn edit_once(
    traj: &JointTrajectory,
    iv: FrameInterval,
    parameter: Parameter,
    setting: &HandPair<f64>,
) -> Result<Edit, StimulusError> {
    let idle = neutral(parameter);
    let mut out = Edit {
        traj: traj.clone(),
        iv,
        source: FrameSource::identity(traj.num_frames()),
    };
    if setting.left == idle && setting.right == idle {
        return Ok(out);
    }
    match parameter {
        Parameter::MaxVelocity => {
            let (t, new_iv, source) = warp_uniform(traj, iv, 1.0 / setting.left)?;
            return Ok(Edit { traj: t, iv: new_iv, source });
        }
        Parameter::InitialAcceleration => {
            let (t, new_iv, source) = warp_ramp(traj, iv, *setting)?;
            return Ok(Edit { traj: t, iv: new_iv, source });
        }
        _ => {}
    }
    for hand in Hand::BOTH {
        let s = *setting.get(hand);
        if s == idle {
            continue;
        }
        out.traj = match parameter {
            Parameter::PathLength | Parameter::MajorAxisLength => scale_size(&out.traj, iv, hand, s)?,
            Parameter::ArmSwivel => rotate_swivel(&out.traj, iv, hand, s)?,
            Parameter::HandOpening => scale_opening(&out.traj, iv, hand, s)?,
            Parameter::MaxVelocity | Parameter::InitialAcceleration => unreachable!("retimed above"),
        };
    }
    Ok(out)
}

fn border_jump(traj: &JointTrajectory, iv: FrameInterval, hand: Hand) -> Result<f64, StimulusError> {
    let w = traj.track(Role::new(hand, JointKind::Wrist))?;
    let mut jump: f64 = 0.0;
    if iv.first > 0 {
        jump = jump.max((w[iv.first] - w[iv.first - 1]).norm());
    }
    if iv.last + 1 < w.len() {
        jump = jump.max((w[iv.last + 1] - w[iv.last]).norm());
    }
    Ok(jump)
}

fn retimed(stroke: &StrokeRecord, iv: FrameInterval, frame_time: f64) -> StrokeRecord {
    StrokeRecord {
        start_s: iv.first as f64 * frame_time,
        end_s: iv.last as f64 * frame_time,
        ..stroke.clone()
    }
}

/// Edits one stroke so that `parameter` approaches `target` on each hand,
/// re-extracting after every pass and correcting the edit strength from
/// the observed response (a secant step, in log space for ratio edits). The
/// best pass is kept; all six parameters are reported from it.
///
/// Targets must lie within the observed corpus range. Velocity is changed
/// by retiming the whole body, so both hands share one factor.
pub fn apply_manipulation(
    stroke: &StrokeRecord,
    traj: &JointTrajectory,
    parameter: Parameter,
    target: HandPair<f64>,
    band: &HandPair<Band>,
) -> Result<ManipulationResult, StimulusError> {
    let mode = MajorAxisMode::FarthestPair;
    let iv = FrameInterval::from_seconds(stroke.start_s, stroke.end_s, traj.frame_time, traj.num_frames())?;
    let original = extract_all(stroke, traj, mode)?;
    let logspace = parameter != Parameter::ArmSwivel;
    for hand in Hand::BOTH {
        let b = band.get(hand);
        let t = *target.get(hand);
        if !b.within_limits(t) || (logspace && t <= 0.0) {
            let (min, max) = b.raw_range();
            return Err(StimulusError::OutsideLimits {
                parameter,
                hand,
                target: t,
                min: if logspace { min.max(0.0) } else { min },
                max,
            });
        }
        if logspace && original.get(parameter, hand) <= ZERO_CURRENT {
            return Err(StimulusError::ZeroCurrent { parameter, hand });
        }
    }

    let fwd = |x: f64| if logspace { x.ln() } else { x };
    let inv = |u: f64| if logspace { u.exp() } else { u };
    let shared = parameter == Parameter::MaxVelocity;
    let mean = |p: HandPair<f64>| 0.5 * (p.left + p.right);
    let g0 = if parameter == Parameter::InitialAcceleration { 2.0 } else { 1.0 };
    let mut gain = HandPair::new(g0, g0);
    let residual = |v: &GestureParams| HandPair::from_fn(|h| fwd(*target.get(h)) - fwd(v.get(parameter, h)));
    let step = |r: HandPair<f64>, gain: &HandPair<f64>| {
        if shared {
            let d = mean(r) / mean(*gain);
            HandPair::new(d, d)
        } else {
            HandPair::from_fn(|h| r.get(h) / gain.get(h))
        }
    };
    let mut u = if Hand::BOTH.iter().all(|&h| *target.get(h) == original.get(parameter, h)) {
        HandPair::new(0.0, 0.0)
    } else {
        step(residual(&original), &gain)
    };

    let scale = HandPair::from_fn(|h| {
        let b = band.get(h);
        (b.p75 - b.p25).abs().max(1e-12)
    });
    let error = |v: &GestureParams| {
        Hand::BOTH
            .iter()
            .map(|&h| (v.get(parameter, h) - target.get(h)).abs() / scale.get(h))
            .fold(0.0, f64::max)
    };

    let mut best: Option<(f64, Edit, GestureParams, HandPair<f64>, usize)> = None;
    let mut prev: Option<(HandPair<f64>, HandPair<f64>)> = None;
    for pass in 1..=MAX_REFINE {
        let setting = HandPair::from_fn(|h| inv(*u.get(h)));
        let edit = edit_once(traj, iv, parameter, &setting)?;
        let achieved = if edit.iv == iv {
            extract_all(stroke, &edit.traj, mode)?
        } else {
            extract_all(&retimed(stroke, edit.iv, traj.frame_time), &edit.traj, mode)?
        };
        let err = error(&achieved);
        let values = achieved.pair(parameter);
        if best.as_ref().is_none_or(|b| err < b.0) {
            best = Some((err, edit, achieved, setting, pass));
        }
        if err < REFINE_TOLERANCE || (logspace && (values.left <= 0.0 || values.right <= 0.0)) {
            break;
        }
        let y = HandPair::from_fn(|h| fwd(*values.get(h)));
        if let Some((pu, py)) = prev {
            for h in Hand::BOTH {
                let du = u.get(h) - pu.get(h);
                let g = (y.get(h) - py.get(h)) / du;
                if du.abs() > 1e-9 && g.is_finite() {
                    *gain.get_mut(h) = g.clamp(0.25, 4.0);
                }
            }
        }
        prev = Some((u, y));
        let d = step(HandPair::from_fn(|h| fwd(*target.get(h)) - y.get(h)), &gain);
        u = HandPair::from_fn(|h| u.get(h) + d.get(h));
    }
    let (_, edit, achieved, setting, iterations) = best.expect("at least one pass runs");

    let target_class = HandPair::from_fn(|h| band.get(h).classify(*target.get(h)));
    let in_target_band =
        HandPair::from_fn(|h| band.get(h).classify(achieved.get(parameter, h)) == *target_class.get(h));
    let border_jump_m = HandPair::try_from_fn(|h| border_jump(&edit.traj, edit.iv, h))?;
    let final_stroke = if edit.iv == iv {
        stroke.clone()
    } else {
        retimed(stroke, edit.iv, traj.frame_time)
    };
    Ok(ManipulationResult {
        stroke_id: stroke.stroke_id.clone(),
        parameter,
        stroke: final_stroke,
        original,
        target,
        achieved,
        trajectory: Some(edit.traj),
        frame_source: edit.source,
        spatial: !matches!(parameter, Parameter::MaxVelocity | Parameter::InitialAcceleration),
        setting,
        iterations,
        target_class,
        in_target_band,
        border_jump_m,
    })
}
