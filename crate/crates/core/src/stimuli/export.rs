use std::collections::BTreeMap;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use super::plan::EditedSequence;
use super::StimulusError;
use crate::hand::{Hand, HandPair, JointKind, Role};
use crate::mocap::rotation::{compose, decompose, swing};
use crate::mocap::{
    forward_kinematics, local_transform, node_position, pose, resolve, JointMap, MotionClip, NodeRef, Skeleton,
};

type V3 = Vector3<f64>;

/// Edited sequence as channel data, plus how closely its forward
/// kinematics follow the edited trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportedMotion {
    pub clip: MotionClip,
    /// Largest distance between a mapped role in the exported motion and
    /// the edited trajectory, meters.
    pub max_error_m: f64,
}

fn rotation_axes(skeleton: &Skeleton, joint: usize) -> Vec<(usize, usize)> {
    skeleton.joints()[joint]
        .channels
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_position())
        .map(|(k, c)| (k, c.axis()))
        .collect()
}

fn three_axes(skeleton: &Skeleton, joint: usize) -> Result<[usize; 3], StimulusError> {
    let axes: Vec<usize> = rotation_axes(skeleton, joint).iter().map(|&(_, a)| a).collect();
    match axes.as_slice() {
        [a, b, c] if a != b && b != c && a != c => Ok([*a, *b, *c]),
        _ => Err(StimulusError::Export(format!(
            "joint `{}` needs three distinct rotation channels to be posed",
            skeleton.joints()[joint].name
        ))),
    }
}

fn to_quat(m: &Matrix3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m))
}

/// Joint channels at fractional frame `x`: exact copy on whole frames,
/// otherwise linear for positions and spherical for rotations.
fn sample_joint(skeleton: &Skeleton, clip: &MotionClip, joint: usize, x: f64, out: &mut [f64]) -> Result<(), StimulusError> {
    let base = skeleton.channel_offset(joint);
    let n = skeleton.joints()[joint].channels.len();
    let i = (x.floor() as usize).min(clip.num_frames() - 1);
    let a = x - i as f64;
    let r0 = &clip.frame(i)[base..base + n];
    if a == 0.0 || i + 1 == clip.num_frames() {
        out[base..base + n].copy_from_slice(r0);
        return Ok(());
    }
    let r1 = &clip.frame(i + 1)[base..base + n];
    for (k, ch) in skeleton.joints()[joint].channels.iter().enumerate() {
        if ch.is_position() {
            out[base + k] = r0[k] * (1.0 - a) + r1[k] * a;
        }
    }
    let rot = rotation_axes(skeleton, joint);
    if rot.len() == 3 {
        let order = three_axes(skeleton, joint)?;
        let q0 = to_quat(&compose(&order, &rot.iter().map(|&(k, _)| r0[k]).collect::<Vec<_>>()));
        let q1 = to_quat(&compose(&order, &rot.iter().map(|&(k, _)| r1[k]).collect::<Vec<_>>()));
        let q = q0.slerp(&q1, a);
        let angles = decompose(q.to_rotation_matrix().matrix(), order);
        for (&(k, _), v) in rot.iter().zip(angles) {
            out[base + k] = v;
        }
    } else {
        for &(k, _) in &rot {
            out[base + k] = r0[k] * (1.0 - a) + r1[k] * a;
        }
    }
    Ok(())
}

fn descendants(skeleton: &Skeleton, root: usize) -> Vec<bool> {
    let mut inside = vec![false; skeleton.joints().len()];
    inside[root] = true;
    for (i, j) in skeleton.joints().iter().enumerate() {
        if let Some(p) = j.parent {
            if inside[p] {
                inside[i] = true;
            }
        }
    }
    inside
}

fn parent_joint(skeleton: &Skeleton, node: NodeRef) -> Option<usize> {
    match node {
        NodeRef::Joint(i) => skeleton.joints()[i].parent,
        NodeRef::EndSite(k) => Some(skeleton.end_sites()[k].parent),
    }
}

/// Positions from world rotations, with each joint's local translation.
fn positions(skeleton: &Skeleton, row: &[f64], rots: &[Matrix3<f64>]) -> Vec<V3> {
    let mut pos: Vec<V3> = Vec::with_capacity(rots.len());
    for (i, j) in skeleton.joints().iter().enumerate() {
        let (_, t) = local_transform(skeleton, i, row);
        pos.push(match j.parent {
            None => t,
            Some(p) => pos[p] + rots[p] * t,
        });
    }
    pos
}

struct ArmChain {
    upper: usize,
    fore: usize,
    elbow: NodeRef,
    wrist: NodeRef,
    tips: Vec<(Role, NodeRef, usize)>,
}

/// Swings the upper arm, forearm and finger joints so the elbow, wrist and
/// fingertips land on their edited positions; every other joint keeps its
/// world rotation. Rewrites the affected rotation channels of `row`.
fn pose_arm(
    skeleton: &Skeleton,
    chain: &ArmChain,
    row: &mut [f64],
    target: &dyn Fn(Role) -> Option<V3>,
    hand: Hand,
) -> Result<(), StimulusError> {
    let (mut rots, _) = pose(skeleton, row);
    let original = rots.clone();
    let mut changed = vec![false; rots.len()];

    let aim = |rots: &mut Vec<Matrix3<f64>>, pivot: usize, node: NodeRef, to: V3, row: &[f64]| {
        let pos = positions(skeleton, row, rots);
        let from = node_position(skeleton, node, rots, &pos) - pos[pivot];
        let want = to - pos[pivot];
        if from.norm() > 1e-12 && want.norm() > 1e-12 {
            rots[pivot] = swing(&from, &want) * rots[pivot];
        }
    };
    if let Some(e) = target(Role::new(hand, JointKind::Elbow)) {
        aim(&mut rots, chain.upper, chain.elbow, e, row);
        changed[chain.upper] = true;
    }
    if let Some(w) = target(Role::new(hand, JointKind::Wrist)) {
        if chain.fore != chain.upper {
            aim(&mut rots, chain.fore, chain.wrist, w, row);
            changed[chain.fore] = true;
        }
    }
    for &(role, node, finger) in &chain.tips {
        if let Some(t) = target(role) {
            aim(&mut rots, finger, node, t, row);
            changed[finger] = true;
        }
    }

    for (i, j) in skeleton.joints().iter().enumerate() {
        let Some(p) = j.parent else { continue };
        if !(changed[i] || changed[p]) || rots[i] == original[i] && rots[p] == original[p] {
            continue;
        }
        let order = three_axes(skeleton, i)?;
        let local = rots[p].transpose() * rots[i];
        let angles = decompose(&local, order);
        let base = skeleton.channel_offset(i);
        for (&(k, _), v) in rotation_axes(skeleton, i).iter().zip(angles) {
            row[base + k] = v;
        }
    }
    Ok(())
}

/// Rebuilds channel data for an edited sequence from its source clip:
/// rows are resampled along the sequence's frame maps (the body and each
/// arm subtree separately), then on frames edited in place each arm is
/// re-posed to follow the edited trajectory.
pub fn export_sequence_motion(
    skeleton: &Skeleton,
    joint_map: &JointMap,
    source: &MotionClip,
    seq: &EditedSequence,
) -> Result<ExportedMotion, StimulusError> {
    let nodes: BTreeMap<Role, NodeRef> = resolve(skeleton, joint_map)?.into_iter().collect();
    let node = |role: Role| {
        nodes
            .get(&role)
            .copied()
            .ok_or(StimulusError::Export(format!("role `{role}` is not mapped")))
    };
    let joint_of = |role: Role| match node(role)? {
        NodeRef::Joint(i) => Ok(i),
        NodeRef::EndSite(_) => Err(StimulusError::Export(format!("role `{role}` must be a joint"))),
    };

    let mut owner: Vec<Option<Hand>> = vec![None; skeleton.joints().len()];
    let mut chains = Vec::new();
    for hand in Hand::BOTH {
        let shoulder = joint_of(Role::new(hand, JointKind::Shoulder))?;
        for (i, inside) in descendants(skeleton, shoulder).into_iter().enumerate() {
            if inside {
                owner[i] = Some(hand);
            }
        }
        let elbow = node(Role::new(hand, JointKind::Elbow))?;
        let wrist = node(Role::new(hand, JointKind::Wrist))?;
        let missing = || StimulusError::Export(format!("the {hand} elbow and wrist need parent joints"));
        let upper = parent_joint(skeleton, elbow).ok_or_else(missing)?;
        let fore = parent_joint(skeleton, wrist).ok_or_else(missing)?;
        let wrist_joint = match wrist {
            NodeRef::Joint(i) => Some(i),
            NodeRef::EndSite(_) => None,
        };
        let mut tips = Vec::new();
        for kind in JointKind::FINGERTIPS {
            let role = Role::new(hand, kind);
            if let Some(&n) = nodes.get(&role) {
                // A tip hanging directly off the wrist or forearm moves rigidly.
                match parent_joint(skeleton, n) {
                    Some(f) if Some(f) != wrist_joint && f != fore && f != upper => tips.push((role, n, f)),
                    _ => {}
                }
            }
        }
        chains.push((hand, ArmChain { upper, fore, elbow, wrist, tips }));
    }

    let traj = seq.trajectory();
    let n_out = traj.num_frames();
    let n_ch = skeleton.channel_count();
    let mut data = Vec::with_capacity(n_out * n_ch);
    for f in 0..n_out {
        let mut row = vec![0.0; n_ch];
        for (j, who) in owner.iter().enumerate() {
            let map = match who {
                Some(h) => seq.frame_source.arms.get(*h),
                None => &seq.frame_source.body,
            };
            sample_joint(skeleton, source, j, seq.first_frame as f64 + map[f], &mut row)?;
        }
        for (hand, chain) in &chains {
            if seq.spatial_frames.get(*hand)[f] {
                let target = |role: Role| traj.track(role).ok().map(|t| t[f]);
                pose_arm(skeleton, chain, &mut row, &target, *hand)?;
            }
        }
        data.extend(row);
    }
    let clip = MotionClip::new(traj.clip_id.clone(), source.frame_time(), n_ch, data).map_err(StimulusError::Export)?;

    let back = forward_kinematics(skeleton, &clip, joint_map)?;
    let mut max_error_m: f64 = 0.0;
    for (role, track) in traj.tracks() {
        if let Ok(other) = back.track(*role) {
            for (a, b) in track.iter().zip(other) {
                max_error_m = max_error_m.max((a - b).norm());
            }
        }
    }
    Ok(ExportedMotion { clip, max_error_m })
}

/// Largest error per arm restricted to frames edited in place, for reports.
pub fn spatial_error(seq: &EditedSequence, exported: &MotionClip, skeleton: &Skeleton, joint_map: &JointMap) -> Result<HandPair<f64>, StimulusError> {
    let back = forward_kinematics(skeleton, exported, joint_map)?;
    let traj = seq.trajectory();
    HandPair::try_from_fn(|hand| {
        let mut worst: f64 = 0.0;
        for kind in [JointKind::Elbow, JointKind::Wrist] {
            let role = Role::new(hand, kind);
            let (a, b) = (traj.track(role)?, back.track(role)?);
            for (f, &on) in seq.spatial_frames.get(hand).iter().enumerate() {
                if on {
                    worst = worst.max((a[f] - b[f]).norm());
                }
            }
        }
        Ok(worst)
    })
}
