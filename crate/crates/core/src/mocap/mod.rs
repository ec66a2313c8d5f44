//! Motion capture: BVH skeletons, motion clips and forward kinematics.

mod bvh;
mod fk;
pub mod ik;
pub mod rotation;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use bvh::{parse_bvh, parse_bvh_scaled, write_bvh, write_bvh_with, BvhError};
pub use fk::{forward_kinematics, FkError, Glitch, JointMap, JointTrajectory, NodeRef};
pub(crate) use fk::{local_transform, node_position, pose, resolve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Xposition => "Xposition",
            Channel::Yposition => "Yposition",
            Channel::Zposition => "Zposition",
            Channel::Xrotation => "Xrotation",
            Channel::Yrotation => "Yrotation",
            Channel::Zrotation => "Zrotation",
        }
    }

    pub fn is_position(self) -> bool {
        matches!(self, Channel::Xposition | Channel::Yposition | Channel::Zposition)
    }

    /// Axis index (0 = x, 1 = y, 2 = z).
    pub fn axis(self) -> usize {
        match self {
            Channel::Xposition | Channel::Xrotation => 0,
            Channel::Yposition | Channel::Yrotation => 1,
            Channel::Zposition | Channel::Zrotation => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// Offset from the parent joint, meters.
    pub offset: Vector3<f64>,
    pub channels: Vec<Channel>,
}

/// Terminal point of a chain (fingertips, head top). Addressable by name,
/// which is the parent joint's name with an `_end` suffix.
#[derive(Debug, Clone, PartialEq)]
pub struct EndSite {
    pub name: String,
    pub parent: usize,
    pub offset: Vector3<f64>,
}

/// Joint hierarchy in topological order (parents before children).
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    joints: Vec<Joint>,
    end_sites: Vec<EndSite>,
    channel_offsets: Vec<usize>,
}

impl Skeleton {
    /// Validates the hierarchy. End sites are stored in the order a writer
    /// emits them (after the child joints of their parent, depth first).
    pub fn new(joints: Vec<Joint>, mut end_sites: Vec<EndSite>) -> Result<Self, String> {
        if joints.is_empty() {
            return Err("skeleton has no joints".into());
        }
        let roots = joints.iter().filter(|j| j.parent.is_none()).count();
        if roots != 1 || joints[0].parent.is_some() {
            return Err(format!("expected exactly one root at index 0, found {roots} roots"));
        }
        for (i, j) in joints.iter().enumerate() {
            if let Some(p) = j.parent {
                if p >= i {
                    return Err(format!("joint `{}` precedes its parent", j.name));
                }
            }
            if !j.offset.iter().all(|v| v.is_finite()) {
                return Err(format!("joint `{}` has a non-finite offset", j.name));
            }
        }
        for s in &end_sites {
            if s.parent >= joints.len() {
                return Err(format!("end site `{}` has an invalid parent", s.name));
            }
            if !s.offset.iter().all(|v| v.is_finite()) {
                return Err(format!("end site `{}` has a non-finite offset", s.name));
            }
        }

        let post = post_order(&joints);
        end_sites.sort_by_key(|s| post[s.parent]);

        let mut channel_offsets = Vec::with_capacity(joints.len());
        let mut acc = 0;
        for j in &joints {
            channel_offsets.push(acc);
            acc += j.channels.len();
        }
        Ok(Self {
            joints,
            end_sites,
            channel_offsets,
        })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn end_sites(&self) -> &[EndSite] {
        &self.end_sites
    }

    pub fn channel_count(&self) -> usize {
        self.joints.iter().map(|j| j.channels.len()).sum()
    }

    /// Index of the first channel of joint `index` within a frame row.
    pub fn channel_offset(&self, index: usize) -> usize {
        self.channel_offsets[index]
    }

    pub fn children(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        self.joints
            .iter()
            .enumerate()
            .filter(move |(_, j)| j.parent == Some(index))
            .map(|(i, _)| i)
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn find(&self, name: &str) -> Option<NodeRef> {
        self.joint_index(name).map(NodeRef::Joint).or_else(|| {
            self.end_sites
                .iter()
                .position(|s| s.name == name)
                .map(NodeRef::EndSite)
        })
    }
}

fn post_order(joints: &[Joint]) -> Vec<usize> {
    fn visit(joints: &[Joint], i: usize, counter: &mut usize, out: &mut [usize]) {
        for c in (0..joints.len()).filter(|&c| joints[c].parent == Some(i)) {
            visit(joints, c, counter, out);
        }
        out[i] = *counter;
        *counter += 1;
    }
    let mut out = vec![0; joints.len()];
    let mut counter = 0;
    visit(joints, 0, &mut counter, &mut out);
    out
}

/// Per-frame channel values: degrees for rotations, meters for translations.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    clip_id: String,
    frame_time: f64,
    n_channels: usize,
    data: Vec<f64>,
}

impl MotionClip {
    pub fn new(
        clip_id: impl Into<String>,
        frame_time: f64,
        n_channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, String> {
        if !(frame_time > 0.0 && frame_time.is_finite()) {
            return Err(format!("frame time must be positive, got {frame_time}"));
        }
        if n_channels == 0 && !data.is_empty() {
            return Err("channel values without channels".into());
        }
        if n_channels > 0 && data.len() % n_channels != 0 {
            return Err("frame data is not a whole number of rows".into());
        }
        let frames = if n_channels == 0 { 0 } else { data.len() / n_channels };
        if frames < 2 {
            return Err(format!("a motion clip needs at least 2 frames, found {frames}"));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err("non-finite channel value".into());
        }
        Ok(Self {
            clip_id: clip_id.into(),
            frame_time,
            n_channels,
            data,
        })
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn frame_time(&self) -> f64 {
        self.frame_time
    }

    pub fn num_frames(&self) -> usize {
        self.data.len() / self.n_channels
    }

    pub fn num_channels(&self) -> usize {
        self.n_channels
    }

    pub fn duration(&self) -> f64 {
        (self.num_frames() - 1) as f64 * self.frame_time
    }

    pub fn frame(&self, index: usize) -> &[f64] {
        &self.data[index * self.n_channels..(index + 1) * self.n_channels]
    }

    pub fn frame_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.data[index * self.n_channels..(index + 1) * self.n_channels]
    }
}

/// Multiplies skeleton offsets and position channels by `factor`, e.g. to
/// store a meter-valued skeleton in centimeters.
pub fn scale_lengths(skeleton: &Skeleton, clip: &MotionClip, factor: f64) -> (Skeleton, MotionClip) {
    let joints: Vec<Joint> = skeleton
        .joints()
        .iter()
        .map(|j| Joint {
            offset: j.offset * factor,
            ..j.clone()
        })
        .collect();
    let sites: Vec<EndSite> = skeleton
        .end_sites()
        .iter()
        .map(|s| EndSite {
            offset: s.offset * factor,
            ..s.clone()
        })
        .collect();
    let mut data = clip.data.clone();
    let n = clip.n_channels;
    for (i, j) in skeleton.joints().iter().enumerate() {
        let base = skeleton.channel_offset(i);
        for (k, ch) in j.channels.iter().enumerate() {
            if ch.is_position() {
                for row in data.chunks_mut(n) {
                    row[base + k] *= factor;
                }
            }
        }
    }
    let scaled = Skeleton::new(joints, sites).expect("scaling keeps the hierarchy valid");
    let clip = MotionClip::new(clip.clip_id.clone(), clip.frame_time, n, data).expect("scaling keeps values finite");
    (scaled, clip)
}
