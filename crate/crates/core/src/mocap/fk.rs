//! Forward kinematics from joint rotations to world-space joint tracks.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::rotation::axis_rotation;
use super::{MotionClip, Skeleton};
use crate::constants::GLITCH_DISPLACEMENT_M;
use crate::hand::Role;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FkError {
    #[error("required role `{0}` is not mapped to a joint")]
    UnmappedRole(Role),
    #[error("role `{role}` maps to unknown joint `{joint}`")]
    UnknownJoint { role: Role, joint: String },
    #[error("motion has {motion} channels but the skeleton declares {skeleton}")]
    ChannelMismatch { motion: usize, skeleton: usize },
    #[error("role `{0}` has no trajectory")]
    MissingRole(Role),
    #[error("trajectory for `{role}` has {found} frames, expected {expected}")]
    FrameMismatch {
        role: Role,
        expected: usize,
        found: usize,
    },
}

/// Role to joint-name assignment, one entry per role.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointMap(pub BTreeMap<Role, String>);

impl JointMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, role: Role, joint: impl Into<String>) -> &mut Self {
        self.0.insert(role, joint.into());
        self
    }

    pub fn get(&self, role: Role) -> Option<&str> {
        self.0.get(&role).map(String::as_str)
    }
}

impl FromIterator<(Role, String)> for JointMap {
    fn from_iter<T: IntoIterator<Item = (Role, String)>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRef {
    Joint(usize),
    EndSite(usize),
}

/// A frame-to-frame jump larger than the capture sanity bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Glitch {
    pub role: Role,
    /// Index of the later frame of the pair.
    pub frame: usize,
    pub displacement: f64,
}

/// World positions (meters) of the mapped roles for every frame of a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrajectory {
    pub clip_id: String,
    pub frame_time: f64,
    positions: BTreeMap<Role, Vec<Vector3<f64>>>,
    n_frames: usize,
}

impl JointTrajectory {
    pub fn new(
        clip_id: impl Into<String>,
        frame_time: f64,
        positions: BTreeMap<Role, Vec<Vector3<f64>>>,
    ) -> Result<Self, FkError> {
        let n_frames = positions.values().next().map_or(0, Vec::len);
        for (role, track) in &positions {
            if track.len() != n_frames {
                return Err(FkError::FrameMismatch {
                    role: *role,
                    expected: n_frames,
                    found: track.len(),
                });
            }
        }
        Ok(Self {
            clip_id: clip_id.into(),
            frame_time,
            positions,
            n_frames,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.n_frames
    }

    pub fn duration(&self) -> f64 {
        self.n_frames.saturating_sub(1) as f64 * self.frame_time
    }

    pub fn roles(&self) -> impl Iterator<Item = Role> + '_ {
        self.positions.keys().copied()
    }

    pub fn has(&self, role: Role) -> bool {
        self.positions.contains_key(&role)
    }

    pub fn track(&self, role: Role) -> Result<&[Vector3<f64>], FkError> {
        self.positions
            .get(&role)
            .map(Vec::as_slice)
            .ok_or(FkError::MissingRole(role))
    }

    pub fn track_mut(&mut self, role: Role) -> Result<&mut Vec<Vector3<f64>>, FkError> {
        self.positions.get_mut(&role).ok_or(FkError::MissingRole(role))
    }

    pub fn tracks(&self) -> &BTreeMap<Role, Vec<Vector3<f64>>> {
        &self.positions
    }

    /// Replaces every track; all must share one length.
    pub fn with_tracks(&self, positions: BTreeMap<Role, Vec<Vector3<f64>>>) -> Result<Self, FkError> {
        Self::new(self.clip_id.clone(), self.frame_time, positions)
    }

    /// Frame pairs whose displacement reaches the glitch bound. Reported, never clamped.
    pub fn glitches(&self) -> Vec<Glitch> {
        let mut out = Vec::new();
        for (role, track) in &self.positions {
            for (f, pair) in track.windows(2).enumerate() {
                let d = (pair[1] - pair[0]).norm();
                if d >= GLITCH_DISPLACEMENT_M {
                    out.push(Glitch {
                        role: *role,
                        frame: f + 1,
                        displacement: d,
                    });
                }
            }
        }
        out
    }

    /// Wide CSV: `frame,time_s` then `x,y,z` per role.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,time_s");
        for role in self.positions.keys() {
            out.push_str(&format!(",{role}_x,{role}_y,{role}_z"));
        }
        out.push('\n');
        for f in 0..self.n_frames {
            out.push_str(&format!("{f},{}", f as f64 * self.frame_time));
            for track in self.positions.values() {
                let p = track[f];
                out.push_str(&format!(",{},{},{}", p.x, p.y, p.z));
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn local_transform(
    skeleton: &Skeleton,
    joint: usize,
    row: &[f64],
) -> (Matrix3<f64>, Vector3<f64>) {
    let j = &skeleton.joints()[joint];
    let base = skeleton.channel_offset(joint);
    let mut rot = Matrix3::identity();
    let mut trans = j.offset;
    for (k, ch) in j.channels.iter().enumerate() {
        let v = row[base + k];
        if ch.is_position() {
            trans[ch.axis()] += v;
        } else {
            rot *= axis_rotation(ch.axis(), v);
        }
    }
    (rot, trans)
}

/// World rotation and position of every joint for one frame.
pub(crate) fn pose(skeleton: &Skeleton, row: &[f64]) -> (Vec<Matrix3<f64>>, Vec<Vector3<f64>>) {
    let n = skeleton.joints().len();
    let mut rots = Vec::with_capacity(n);
    let mut pos = Vec::with_capacity(n);
    for (i, joint) in skeleton.joints().iter().enumerate() {
        let (r, t) = local_transform(skeleton, i, row);
        match joint.parent {
            None => {
                rots.push(r);
                pos.push(t);
            }
            Some(p) => {
                let pr: Matrix3<f64> = rots[p];
                pos.push(pos[p] + pr * t);
                rots.push(pr * r);
            }
        }
    }
    (rots, pos)
}

pub(crate) fn node_position(
    skeleton: &Skeleton,
    node: NodeRef,
    rots: &[Matrix3<f64>],
    pos: &[Vector3<f64>],
) -> Vector3<f64> {
    match node {
        NodeRef::Joint(i) => pos[i],
        NodeRef::EndSite(k) => {
            let site = &skeleton.end_sites()[k];
            pos[site.parent] + rots[site.parent] * site.offset
        }
    }
}

pub(crate) fn resolve(skeleton: &Skeleton, joint_map: &JointMap) -> Result<Vec<(Role, NodeRef)>, FkError> {
    for role in Role::all().filter(|r| r.kind.is_required()) {
        if joint_map.get(role).is_none() {
            return Err(FkError::UnmappedRole(role));
        }
    }
    joint_map
        .0
        .iter()
        .map(|(role, name)| {
            skeleton
                .find(name)
                .map(|n| (*role, n))
                .ok_or_else(|| FkError::UnknownJoint {
                    role: *role,
                    joint: name.clone(),
                })
        })
        .collect()
}

/// World positions of every mapped role, composing parent transforms from
/// the root down with each joint's declared rotation order.
pub fn forward_kinematics(
    skeleton: &Skeleton,
    motion: &MotionClip,
    joint_map: &JointMap,
) -> Result<JointTrajectory, FkError> {
    if motion.num_channels() != skeleton.channel_count() {
        return Err(FkError::ChannelMismatch {
            motion: motion.num_channels(),
            skeleton: skeleton.channel_count(),
        });
    }
    let nodes = resolve(skeleton, joint_map)?;
    let n_frames = motion.num_frames();
    let mut positions: BTreeMap<Role, Vec<Vector3<f64>>> = nodes
        .iter()
        .map(|(r, _)| (*r, Vec::with_capacity(n_frames)))
        .collect();
    for f in 0..n_frames {
        let (rots, pos) = pose(skeleton, motion.frame(f));
        for (role, node) in &nodes {
            positions
                .get_mut(role)
                .expect("role inserted above")
                .push(node_position(skeleton, *node, &rots, &pos));
        }
    }
    JointTrajectory::new(motion.clip_id(), motion.frame_time(), positions)
}
