//! Seeded synthetic corpus: a small upper-body skeleton performing
//! closed-form strokes, paired with harmonic pseudo-speech whose loudness
//! follows the clip's expressiveness.
//!
//! Even-numbered clips belong to dataset `A` (60 fps, stored in
//! centimeters), odd ones to dataset `B` (100 fps, meters).

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{write_labels, Manifest, ManifestEntry, StrokeRecord, StrokeSource};
use crate::audio::{write_wav_pcm16, AudioBuffer};
use crate::hand::{Hand, JointKind, Role};
use crate::mocap::ik::place_elbow;
use crate::mocap::rotation::{decompose, swing};
use crate::mocap::{
    forward_kinematics, scale_lengths, write_bvh_with, Channel, EndSite, FkError, Joint, JointMap,
    JointTrajectory, MotionClip, Skeleton,
};

type V3 = Vector3<f64>;

pub const SYNTH_SAMPLE_RATE: u32 = 16_000;
const UPPER_ARM_M: f64 = 0.28;
const FOREARM_M: f64 = 0.26;
const ROOT_HEIGHT_M: f64 = 1.0;
/// Channel values written to disk keep this many decimals.
const BVH_DECIMALS: usize = 6;
const FINGERS: [(&str, JointKind, f64, f64, f64); 4] = [
    // name, tip role, knuckle x, knuckle z, finger length
    ("Index", JointKind::IndexTip, 0.070, 0.024, 0.070),
    ("Middle", JointKind::MiddleTip, 0.075, 0.008, 0.075),
    ("Ring", JointKind::RingTip, 0.070, -0.008, 0.070),
    ("Pinky", JointKind::PinkyTip, 0.060, -0.024, 0.055),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_clips: usize,
    pub strokes_per_clip: usize,
    pub seed: u64,
    /// Make clip 0 uniformly low-expressive and clip 1 uniformly high.
    pub plant_extremes: bool,
}

impl SynthConfig {
    /// Six clips of ten strokes.
    pub fn mini(seed: u64) -> Self {
        Self {
            n_clips: 6,
            strokes_per_clip: 10,
            seed,
            plant_extremes: true,
        }
    }

    /// About `strokes` strokes spread over clips of ten.
    pub fn with_strokes(strokes: usize, seed: u64) -> Self {
        Self {
            n_clips: strokes.div_ceil(10).max(2),
            strokes_per_clip: 10,
            seed,
            plant_extremes: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthClip {
    pub clip_id: String,
    pub dataset_id: String,
    /// File units times this factor gives meters.
    pub scale_factor: f64,
    /// Channel values in meters and degrees.
    pub motion: MotionClip,
    pub audio: AudioBuffer,
    pub strokes: Vec<StrokeRecord>,
    /// Latent expressiveness in [0, 1] driving loudness and stroke shape.
    pub expressiveness: f64,
}

impl SynthClip {
    /// Shared duration of motion and audio.
    pub fn duration(&self) -> f64 {
        self.motion.duration()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub config: SynthConfig,
    /// Skeleton with offsets in meters.
    pub skeleton: Skeleton,
    pub joint_map: JointMap,
    pub clips: Vec<SynthClip>,
}

impl SyntheticCorpus {
    pub fn strokes(&self) -> Vec<StrokeRecord> {
        self.clips.iter().flat_map(|c| c.strokes.iter().cloned()).collect()
    }

    pub fn trajectory(&self, clip: &SynthClip) -> Result<JointTrajectory, FkError> {
        forward_kinematics(&self.skeleton, &clip.motion, &self.joint_map)
    }

    /// Writes `audio/*.wav`, `motion/*.bvh`, `labels.csv` and
    /// `manifest.csv` under `dir`, returning the manifest.
    pub fn write(&self, dir: &Path) -> std::io::Result<Manifest> {
        std::fs::create_dir_all(dir.join("audio"))?;
        std::fs::create_dir_all(dir.join("motion"))?;
        let mut entries = Vec::new();
        for clip in &self.clips {
            let audio_path = Path::new("audio").join(format!("{}.wav", clip.clip_id));
            let bvh_path = Path::new("motion").join(format!("{}.bvh", clip.clip_id));
            std::fs::write(dir.join(&audio_path), write_wav_pcm16(clip.audio.samples(), SYNTH_SAMPLE_RATE))?;
            let (sk, motion) = scale_lengths(&self.skeleton, &clip.motion, 1.0 / clip.scale_factor);
            std::fs::write(dir.join(&bvh_path), write_bvh_with(&sk, &motion, Some(BVH_DECIMALS)))?;
            entries.push(ManifestEntry {
                clip_id: clip.clip_id.clone(),
                dataset_id: clip.dataset_id.clone(),
                audio_path,
                bvh_path,
                labels_path: "labels.csv".into(),
                scale_factor: clip.scale_factor,
            });
        }
        std::fs::write(dir.join("labels.csv"), write_labels(&self.strokes()))?;
        let manifest = Manifest {
            root: dir.to_path_buf(),
            entries,
        };
        std::fs::write(dir.join("manifest.csv"), manifest.to_csv())?;
        Ok(manifest)
    }
}

fn side(hand: Hand) -> f64 {
    match hand {
        Hand::Left => 1.0,
        Hand::Right => -1.0,
    }
}

fn prefix(hand: Hand) -> &'static str {
    match hand {
        Hand::Left => "Left",
        Hand::Right => "Right",
    }
}

const ROT: [Channel; 3] = [Channel::Zrotation, Channel::Xrotation, Channel::Yrotation];
const ROT_ORDER: [usize; 3] = [2, 0, 1];

/// Hips, spine, neck and two arms with palm and four fingers each. All
/// non-root joints rotate in Z-X-Y order. Returns the skeleton and its
/// role assignment.
pub fn synthetic_skeleton() -> (Skeleton, JointMap) {
    let mut joints = Vec::new();
    let mut sites = Vec::new();
    let mut push = |name: String, parent: Option<usize>, offset: V3, channels: Vec<Channel>| {
        joints.push(Joint {
            name,
            parent,
            offset,
            channels,
        });
        joints.len() - 1
    };
    let hips = push(
        "Hips".into(),
        None,
        V3::zeros(),
        vec![
            Channel::Xposition,
            Channel::Yposition,
            Channel::Zposition,
            Channel::Zrotation,
            Channel::Xrotation,
            Channel::Yrotation,
        ],
    );
    let spine = push("Spine".into(), Some(hips), V3::new(0.0, 0.2, 0.0), ROT.to_vec());
    let neck = push("Neck".into(), Some(spine), V3::new(0.0, 0.25, 0.0), ROT.to_vec());
    let mut tip_sites = Vec::new();
    let mut map = JointMap::new();
    for hand in Hand::BOTH {
        let s = side(hand);
        let p = prefix(hand);
        let collar = push(format!("{p}Collar"), Some(spine), V3::new(0.05 * s, 0.22, 0.0), ROT.to_vec());
        let arm = push(format!("{p}Arm"), Some(collar), V3::new(0.13 * s, 0.03, 0.0), ROT.to_vec());
        let fore = push(format!("{p}ForeArm"), Some(arm), V3::new(UPPER_ARM_M * s, 0.0, 0.0), ROT.to_vec());
        let wrist = push(format!("{p}Hand"), Some(fore), V3::new(FOREARM_M * s, 0.0, 0.0), ROT.to_vec());
        let palm = push(format!("{p}Palm"), Some(wrist), V3::new(0.03 * s, 0.0, 0.0), ROT.to_vec());
        map.insert(Role::new(hand, JointKind::Shoulder), format!("{p}Arm"));
        map.insert(Role::new(hand, JointKind::Elbow), format!("{p}ForeArm"));
        map.insert(Role::new(hand, JointKind::Wrist), format!("{p}Hand"));
        map.insert(Role::new(hand, JointKind::WristBase), format!("{p}Palm"));
        for (name, kind, kx, kz, len) in FINGERS {
            let f = push(format!("{p}{name}"), Some(palm), V3::new(kx * s, 0.0, kz), ROT.to_vec());
            tip_sites.push((f, format!("{p}{name}_end"), V3::new(len * s, 0.0, 0.0)));
            map.insert(Role::new(hand, kind), format!("{p}{name}_end"));
        }
    }
    sites.push(EndSite {
        name: "Neck_end".into(),
        parent: neck,
        offset: V3::new(0.0, 0.12, 0.0),
    });
    for (parent, name, offset) in tip_sites {
        sites.push(EndSite { name, parent, offset });
    }
    (Skeleton::new(joints, sites).expect("static hierarchy is valid"), map)
}

/// Arm posture at one instant, relative to the shoulder.
#[derive(Debug, Clone, Copy)]
struct ArmPose {
    wrist: V3,
    swivel_deg: f64,
    curl_deg: f64,
}

impl ArmPose {
    fn lerp(&self, other: &ArmPose, a: f64) -> ArmPose {
        ArmPose {
            wrist: self.wrist + (other.wrist - self.wrist) * a,
            swivel_deg: self.swivel_deg + (other.swivel_deg - self.swivel_deg) * a,
            curl_deg: self.curl_deg + (other.curl_deg - self.curl_deg) * a,
        }
    }
}

fn min_jerk(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
}

/// One stroke of one hand.
#[derive(Debug, Clone)]
struct StrokeShape {
    start_s: f64,
    end_s: f64,
    origin: V3,
    direction: V3,
    amplitude: f64,
    bulge: V3,
    warp: f64,
    swivel_deg: f64,
    curl_deg: f64,
}

impl StrokeShape {
    fn progress(&self, t: f64) -> f64 {
        let u = ((t - self.start_s) / (self.end_s - self.start_s)).clamp(0.0, 1.0);
        min_jerk(u.powf(self.warp))
    }

    fn pose(&self, t: f64) -> ArmPose {
        let p = self.progress(t);
        ArmPose {
            wrist: self.origin + self.direction * (self.amplitude * p) + self.bulge * (PI * p).sin(),
            swivel_deg: self.swivel_deg + 4.0 * side_sign(self.swivel_deg) * (PI * p).sin(),
            curl_deg: self.curl_deg,
        }
    }
}

fn side_sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn home(hand: Hand) -> ArmPose {
    ArmPose {
        wrist: V3::new(-0.12 * side(hand), -0.32, 0.20),
        swivel_deg: 10.0 * side(hand),
        curl_deg: 60.0,
    }
}

/// Fraction of each inter-stroke gap spent on retraction and on preparation.
const TRANSITION_SHARE: f64 = 0.4;
const LEAD_TRANSITION_S: f64 = 0.4;

fn arm_pose(hand: Hand, strokes: &[StrokeShape], t: f64) -> ArmPose {
    let rest = home(hand);
    let idle = |t: f64| ArmPose {
        wrist: rest.wrist + V3::new(0.0, 0.004 * (2.0 * PI * 0.3 * t).sin(), 0.003 * (2.0 * PI * 0.2 * t).cos()),
        ..rest
    };
    let i = strokes.partition_point(|s| s.start_s <= t);
    if i > 0 && t <= strokes[i - 1].end_s {
        return strokes[i - 1].pose(t);
    }
    // Between strokes i-1 and i.
    let retract_end = if i > 0 {
        let prev = &strokes[i - 1];
        let gap = strokes.get(i).map_or(LEAD_TRANSITION_S / TRANSITION_SHARE, |n| n.start_s - prev.end_s);
        let len = TRANSITION_SHARE * gap;
        if t < prev.end_s + len {
            let a = min_jerk((t - prev.end_s) / len);
            return prev.pose(prev.end_s).lerp(&idle(prev.end_s + len), a);
        }
        prev.end_s + len
    } else {
        f64::NEG_INFINITY
    };
    if let Some(next) = strokes.get(i) {
        let gap = if i > 0 {
            next.start_s - strokes[i - 1].end_s
        } else {
            LEAD_TRANSITION_S / TRANSITION_SHARE
        };
        let len = TRANSITION_SHARE * gap;
        let begin = next.start_s - len;
        if t > begin && t >= retract_end {
            let a = min_jerk((t - begin) / len);
            return idle(begin).lerp(&next.pose(next.start_s), a);
        }
    }
    idle(t)
}

fn write_rot(row: &mut [f64], skeleton: &Skeleton, joint: usize, r: &Matrix3<f64>) {
    let base = skeleton.channel_offset(joint);
    let angles = decompose(r, ROT_ORDER);
    row[base..base + 3].copy_from_slice(&angles);
}

struct Poser {
    skeleton: Skeleton,
    joints: [[usize; 5]; 2],
    fingers: [[usize; 4]; 2],
}

impl Poser {
    fn new(skeleton: Skeleton) -> Self {
        let idx = |n: String| skeleton.joint_index(&n).expect("synthetic joint");
        let joints = Hand::BOTH.map(|h| {
            let p = prefix(h);
            ["Collar", "Arm", "ForeArm", "Hand", "Palm"].map(|j| idx(format!("{p}{j}")))
        });
        let fingers = Hand::BOTH.map(|h| FINGERS.map(|f| idx(format!("{}{}", prefix(h), f.0))));
        Self {
            skeleton,
            joints,
            fingers,
        }
    }

    fn frame(&self, root: V3, poses: [ArmPose; 2]) -> Vec<f64> {
        let mut row = vec![0.0; self.skeleton.channel_count()];
        row[0..3].copy_from_slice(&[root.x, root.y, root.z]);
        for (k, hand) in Hand::BOTH.into_iter().enumerate() {
            let s = side(hand);
            let pose = poses[k];
            let shoulder = root + V3::new(0.18 * s, 0.45, 0.0);
            let wrist = shoulder + pose.wrist;
            let elbow = place_elbow(&shoulder, &wrist, UPPER_ARM_M, FOREARM_M, pose.swivel_deg);
            let bone = V3::new(s, 0.0, 0.0);
            let arm_world = swing(&bone, &(elbow - shoulder));
            let fore_world = swing(&(arm_world * bone), &(wrist - elbow)) * arm_world;
            let [_, arm, fore, _, _] = self.joints[k];
            write_rot(&mut row, &self.skeleton, arm, &arm_world);
            write_rot(&mut row, &self.skeleton, fore, &(arm_world.transpose() * fore_world));
            for &f in &self.fingers[k] {
                let base = self.skeleton.channel_offset(f);
                row[base] = -pose.curl_deg * s;
            }
        }
        row
    }
}

struct ClipPlan {
    duration: f64,
    strokes: Vec<(f64, f64)>,
    shapes: [Vec<StrokeShape>; 2],
    expressiveness: f64,
}

fn plan_clip(rng: &mut ChaCha8Rng, n_strokes: usize, planted: Option<bool>) -> ClipPlan {
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let (level, spread): (f64, f64) = match planted {
        Some(false) => (0.02, 0.03),
        Some(true) => (0.98, 0.03),
        None => (rng.gen_range(0.0..1.0), 0.2),
    };
    let mut t = rng.gen_range(1.0..1.5);
    let mut strokes = Vec::new();
    let mut shapes: [Vec<StrokeShape>; 2] = [Vec::new(), Vec::new()];
    for _ in 0..n_strokes {
        let dur = match planted {
            Some(false) => rng.gen_range(0.9..1.2),
            Some(true) => rng.gen_range(0.4..0.55),
            None => rng.gen_range(0.4..1.2),
        };
        let (start, end) = (t, t + dur);
        strokes.push((start, end));
        let e = (level + spread * noise.sample(rng)).clamp(0.0, 1.0);
        let warp = rng.gen_range(0.7..1.4);
        for (k, hand) in Hand::BOTH.into_iter().enumerate() {
            let s = side(hand);
            let eh = (e + 0.5 * spread * noise.sample(rng)).clamp(0.0, 1.0);
            let amplitude = (0.06 + 0.18 * eh) * rng.gen_range(0.85..1.15);
            let direction = V3::new(
                -s * rng.gen_range(0.0..0.6),
                rng.gen_range(-0.2..1.0),
                rng.gen_range(-0.3..0.5),
            )
            .normalize();
            let perp = direction.cross(&V3::z());
            let perp = if perp.norm() < 1e-6 { V3::x() } else { perp.normalize() };
            let jitter = V3::new(
                rng.gen_range(-0.03..0.03),
                rng.gen_range(-0.03..0.03),
                rng.gen_range(-0.03..0.03),
            );
            shapes[k].push(StrokeShape {
                start_s: start,
                end_s: end,
                origin: home(hand).wrist + jitter,
                direction,
                amplitude,
                bulge: perp * (amplitude * rng.gen_range(0.0..0.25)),
                warp,
                swivel_deg: s * (15.0 + 45.0 * eh + 5.0 * noise.sample(rng)),
                curl_deg: (90.0 - 70.0 * eh + 5.0 * noise.sample(rng)).clamp(5.0, 110.0),
            });
        }
        t = end + rng.gen_range(0.5..1.0);
    }
    let duration = t + rng.gen_range(0.5..1.0);
    ClipPlan {
        duration,
        strokes,
        shapes,
        expressiveness: level,
    }
}

/// Harmonic syllables with slowly varying pitch over a faint noise floor.
/// Loudness scales with `level`.
fn synth_audio(rng: &mut ChaCha8Rng, clip_id: &str, duration: f64, level: f64) -> AudioBuffer {
    let sr = SYNTH_SAMPLE_RATE as f64;
    let n = (duration * sr).round() as usize;
    let mut x = vec![0.0; n];
    let noise = Normal::new(0.0, 0.002).expect("valid std");
    for v in x.iter_mut() {
        *v = noise.sample(rng);
    }
    let amp = 0.03 + 0.25 * level;
    let mut t = rng.gen_range(0.1..0.4);
    let mut since_pause = 0.0;
    while t < duration - 0.3 {
        let len = rng.gen_range(0.12..0.28);
        let f0 = 100.0 + rng.gen_range(0.0..60.0) + 50.0 * level;
        let glide = rng.gen_range(-0.15..0.15);
        let a = amp * rng.gen_range(0.7..1.0);
        let (i0, i1) = ((t * sr) as usize, (((t + len) * sr) as usize).min(n));
        let mut phase = 0.0;
        for (i, v) in x.iter_mut().enumerate().take(i1).skip(i0) {
            let u = (i - i0) as f64 / (i1 - i0) as f64;
            let f = f0 * (1.0 + glide * (u - 0.5));
            phase += 2.0 * PI * f / sr;
            let env = (PI * u).sin().sqrt();
            let mut s = 0.0;
            for h in 1..=8 {
                s += (phase * h as f64).sin() / h as f64;
            }
            *v += a * env * s * 0.5;
        }
        since_pause += len;
        t += len + rng.gen_range(0.04..0.12);
        if since_pause > 2.0 {
            t += rng.gen_range(0.25..0.45);
            since_pause = 0.0;
        }
    }
    for v in x.iter_mut() {
        *v = v.clamp(-0.99, 0.99);
    }
    AudioBuffer::new(clip_id, x, SYNTH_SAMPLE_RATE).expect("synthetic audio is valid")
}

/// Generates the corpus. Identical configs give identical corpora.
pub fn generate(config: &SynthConfig) -> SyntheticCorpus {
    let (skeleton, joint_map) = synthetic_skeleton();
    let poser = Poser::new(skeleton.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut clips = Vec::with_capacity(config.n_clips);
    for c in 0..config.n_clips {
        let clip_id = format!("clip_{c:03}");
        let (dataset_id, frame_time, scale_factor) = if c % 2 == 0 {
            ("A", 1.0 / 60.0, 0.01)
        } else {
            ("B", 1.0 / 100.0, 1.0)
        };
        let planted = match (config.plant_extremes, c) {
            (true, 0) => Some(false),
            (true, 1) => Some(true),
            _ => None,
        };
        let plan = plan_clip(&mut rng, config.strokes_per_clip, planted);
        let n_frames = (plan.duration / frame_time).floor() as usize + 1;
        let sway_phase = rng.gen_range(0.0..2.0 * PI);
        let mut data = Vec::with_capacity(n_frames * skeleton.channel_count());
        for f in 0..n_frames {
            let t = f as f64 * frame_time;
            let root = V3::new(0.01 * (0.5 * t + sway_phase).sin(), ROOT_HEIGHT_M, 0.0);
            let poses = [0, 1].map(|k| arm_pose(Hand::BOTH[k], &plan.shapes[k], t));
            data.extend(poser.frame(root, poses));
        }
        let motion = MotionClip::new(clip_id.clone(), frame_time, skeleton.channel_count(), data)
            .expect("synthetic motion is valid");
        let audio = synth_audio(&mut rng, &clip_id, motion.duration(), plan.expressiveness);
        let source = if dataset_id == "A" {
            StrokeSource::Hand
        } else {
            StrokeSource::Automatic
        };
        let strokes = plan
            .strokes
            .iter()
            .enumerate()
            .map(|(i, &(start_s, end_s))| StrokeRecord {
                stroke_id: format!("{clip_id}_s{i:02}"),
                clip_id: clip_id.clone(),
                dataset_id: dataset_id.to_string(),
                start_s: round_ms(start_s),
                end_s: round_ms(end_s),
                source,
            })
            .collect();
        clips.push(SynthClip {
            clip_id,
            dataset_id: dataset_id.to_string(),
            scale_factor,
            motion,
            audio,
            strokes,
            expressiveness: plan.expressiveness,
        });
    }
    SyntheticCorpus {
        config: config.clone(),
        skeleton,
        joint_map,
        clips,
    }
}

fn round_ms(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}
