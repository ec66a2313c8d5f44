//! Acceptance suite. Runs each criterion in turn, prints one PASS/FAIL line
//! per criterion and exits nonzero when any fails.
//!
//! The oracles here are written against plain `[f64; 3]` arithmetic and do
//! not call into the library code they check.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gesturekit::audio::{assemble_features, FeatureNormalizer, FeatureSet};
use gesturekit::config::RunConfig;
use gesturekit::corpus::synth::{generate, synthetic_skeleton, SynthConfig};
use gesturekit::corpus::{make_split, window_for_stroke, StrokeRecord, StrokeSource, StrokeWindow};
use gesturekit::eval::{
    emit_table, parse_table_csv, random_baseline, wilcoxon_paired, BaselineConfig, BaselineStroke, ErrorReport,
    ErrorSummary, Restriction, WilcoxonMethod,
};
use gesturekit::mocap::{forward_kinematics, Channel, EndSite, Joint, JointMap, JointTrajectory, MotionClip, Skeleton};
use gesturekit::model::{
    loss_and_gradients, train, Batch, DropoutMasks, Mode, ModelConfig, Network, Sample, TargetNormalizer, Weights,
};
use gesturekit::params::{extract_all, initial_acceleration, FrameInterval, GestureParams, MajorAxisMode, Parameter};
use gesturekit::stimuli::{build_plan, execute_plan, rotate_swivel, scale_size, verify_plan, warp_uniform, Direction, PlanConfig, MANIPULABLE};
use gesturekit::{Hand, HandPair, JointKind, Role};
use gesturekit_cli::{cmd_evaluate, cmd_extract, cmd_synth, cmd_train, Context, Subset, TrainOptions};
use nalgebra::Vector3;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type P = [f64; 3];
type Outcome = Result<String, String>;

fn sub(a: P, b: P) -> P {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add(a: P, b: P) -> P {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: P, k: f64) -> P {
    [a[0] * k, a[1] * k, a[2] * k]
}

fn dot(a: P, b: P) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: P, b: P) -> P {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dist(a: P, b: P) -> f64 {
    dot(sub(a, b), sub(a, b)).sqrt()
}

fn arr(v: &Vector3<f64>) -> P {
    [v.x, v.y, v.z]
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Oracles

type M4 = [[f64; 4]; 4];

fn mat_mul(a: &M4, b: &M4) -> M4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn translation(t: P) -> M4 {
    [[1.0, 0.0, 0.0, t[0]], [0.0, 1.0, 0.0, t[1]], [0.0, 0.0, 1.0, t[2]], [0.0, 0.0, 0.0, 1.0]]
}

fn rotation(channel: Channel, degrees: f64) -> M4 {
    let (s, c) = degrees.to_radians().sin_cos();
    match channel {
        Channel::Xrotation => [[1.0, 0.0, 0.0, 0.0], [0.0, c, -s, 0.0], [0.0, s, c, 0.0], [0.0, 0.0, 0.0, 1.0]],
        Channel::Yrotation => [[c, 0.0, s, 0.0], [0.0, 1.0, 0.0, 0.0], [-s, 0.0, c, 0.0], [0.0, 0.0, 0.0, 1.0]],
        Channel::Zrotation => [[c, -s, 0.0, 0.0], [s, c, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]],
        _ => unreachable!("position channel"),
    }
}

fn apply(m: &M4, p: P) -> P {
    let r = |i: usize| m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2] + m[i][3];
    [r(0), r(1), r(2)]
}

/// World matrix of every joint for one frame: a stack of homogeneous
/// transforms pushed from the root along each parent chain.
fn matrix_stack(skeleton: &Skeleton, row: &[f64]) -> Vec<M4> {
    let joints = skeleton.joints();
    let local = |i: usize| -> M4 {
        let j = &joints[i];
        let base = skeleton.channel_offset(i);
        let mut t = arr(&j.offset);
        let mut rots = Vec::new();
        for (k, ch) in j.channels.iter().enumerate() {
            let v = row[base + k];
            match ch {
                Channel::Xposition => t[0] += v,
                Channel::Yposition => t[1] += v,
                Channel::Zposition => t[2] += v,
                _ => rots.push(rotation(*ch, v)),
            }
        }
        rots.into_iter().fold(translation(t), |m, r| mat_mul(&m, &r))
    };
    (0..joints.len())
        .map(|i| {
            let mut chain = vec![i];
            while let Some(p) = joints[*chain.last().unwrap()].parent {
                chain.push(p);
            }
            chain.iter().rev().fold(translation([0.0; 3]), |m, &k| mat_mul(&m, &local(k)))
        })
        .collect()
}

/// Positions of every mapped role per frame, from the matrix stack.
fn oracle_fk(skeleton: &Skeleton, motion: &MotionClip, map: &JointMap) -> BTreeMap<Role, Vec<P>> {
    let mut out: BTreeMap<Role, Vec<P>> = BTreeMap::new();
    for f in 0..motion.num_frames() {
        let world = matrix_stack(skeleton, motion.frame(f));
        for (role, name) in &map.0 {
            let p = if let Some(i) = skeleton.joints().iter().position(|j| &j.name == name) {
                apply(&world[i], [0.0; 3])
            } else {
                let site = skeleton.end_sites().iter().find(|s| &s.name == name).expect("mapped node exists");
                apply(&world[site.parent], arr(&site.offset))
            };
            out.entry(*role).or_default().push(p);
        }
    }
    out
}

fn oracle_path_length(w: &[P]) -> f64 {
    (1..w.len()).map(|i| dist(w[i], w[i - 1])).sum()
}

fn oracle_major_axis(w: &[P]) -> f64 {
    let mut best = 0.0f64;
    for a in w {
        for b in w {
            best = best.max(dist(*a, *b));
        }
    }
    best
}

/// Five-frame centered average; samples past either end are mirrored
/// through the end sample.
fn oracle_smooth(w: &[P]) -> Vec<P> {
    let n = w.len() as isize;
    let half = 2.min(n - 1);
    let sample = |i: isize| -> P {
        if i < 0 {
            sub(scale(w[0], 2.0), w[(-i) as usize])
        } else if i >= n {
            sub(scale(w[(n - 1) as usize], 2.0), w[(2 * (n - 1) - i) as usize])
        } else {
            w[i as usize]
        }
    };
    (0..n)
        .map(|t| {
            let mut acc = [0.0; 3];
            for k in -half..=half {
                acc = add(acc, sample(t + k));
            }
            scale(acc, 1.0 / (2 * half + 1) as f64)
        })
        .collect()
}

fn oracle_max_velocity(w: &[P], dt: f64) -> f64 {
    let s = oracle_smooth(w);
    (1..s.len()).map(|i| dist(s[i], s[i - 1]) / dt).fold(f64::MIN, f64::max)
}

fn oracle_hand_opening(base: &[P], tips: &[Vec<P>]) -> f64 {
    let per_frame: Vec<f64> = (0..base.len())
        .map(|t| tips.iter().map(|tip| dist(tip[t], base[t])).sum::<f64>() / tips.len() as f64)
        .collect();
    per_frame.iter().sum::<f64>() / per_frame.len() as f64
}

/// Mean signed angle (degrees) between world-down and the elbow, both
/// projected onto the plane normal to the shoulder-wrist axis.
fn oracle_swivel(s: &[P], e: &[P], w: &[P]) -> Result<f64, String> {
    let mut sum = 0.0;
    for t in 0..s.len() {
        let axis = sub(w[t], s[t]);
        let len = dot(axis, axis).sqrt();
        if len < 0.05 {
            return Err(format!("fixture frame {t}: arm span {len} too short"));
        }
        let a = scale(axis, 1.0 / len);
        let rel = sub(e[t], s[t]);
        let ep = sub(rel, scale(a, dot(a, rel)));
        let down = [0.0, -1.0, 0.0];
        let rp = sub(down, scale(a, dot(a, down)));
        if dot(ep, ep).sqrt() < 1e-4 || dot(rp, rp).sqrt() < 1e-4 {
            return Err(format!("fixture frame {t}: degenerate swivel geometry"));
        }
        let c = cross(rp, ep);
        let magnitude = dot(c, c).sqrt().atan2(dot(rp, ep));
        let sign = if dot(a, c) < 0.0 { -1.0 } else { 1.0 };
        sum += sign * magnitude.to_degrees();
    }
    Ok(sum / s.len() as f64)
}

/// Signed-rank two-sided p by enumerating all sign assignments.
fn oracle_wilcoxon_p(diffs: &[f64]) -> f64 {
    let d: Vec<f64> = diffs.iter().copied().filter(|v| *v != 0.0).collect();
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks: Vec<f64> = abs
        .iter()
        .map(|a| {
            let below = abs.iter().filter(|b| *b < a).count() as f64;
            let equal = abs.iter().filter(|b| *b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let total: f64 = ranks.iter().sum();
    let observed: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let low = observed.min(total - observed);
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        if w <= low + 1e-9 {
            hits += 1;
        }
    }
    (2.0 * hits as f64 / (1u64 << n) as f64).min(1.0)
}

// ---------------------------------------------------------------------------
// Fixtures

/// A clip of the synthetic skeleton driven by random sinusoids, with the
/// elbows kept bent so the swivel is defined on every frame.
fn random_clip(rng: &mut ChaCha8Rng, skeleton: &Skeleton, index: usize) -> MotionClip {
    let frame_time = [1.0 / 60.0, 1.0 / 100.0, 1.0 / 120.0][rng.gen_range(0..3)];
    let n = rng.gen_range(30..=160);
    let mut waves = Vec::new();
    for j in skeleton.joints() {
        for ch in &j.channels {
            let (base, amp) = match ch {
                Channel::Yposition => (1.0, 0.05),
                Channel::Xposition | Channel::Zposition => (0.0, 0.05),
                Channel::Yrotation if j.name.ends_with("ForeArm") => {
                    (rng.gen_range(50.0..100.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }, 15.0)
                }
                _ => (0.0, 20.0),
            };
            waves.push((
                base,
                rng.gen_range(0.0..amp),
                rng.gen_range(0.2..2.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
            ));
        }
    }
    let mut data = Vec::with_capacity(n * waves.len());
    for f in 0..n {
        let t = f as f64 * frame_time;
        for &(base, amp, hz, phase) in &waves {
            data.push(base + amp * (std::f64::consts::TAU * hz * t + phase).sin());
        }
    }
    MotionClip::new(format!("fixture_{index}"), frame_time, waves.len(), data).expect("valid fixture clip")
}

fn stroke(id: &str, clip: &str, dataset: &str, first: usize, last: usize, dt: f64) -> StrokeRecord {
    StrokeRecord {
        stroke_id: id.into(),
        clip_id: clip.into(),
        dataset_id: dataset.into(),
        start_s: first as f64 * dt,
        end_s: last as f64 * dt,
        source: StrokeSource::Hand,
    }
}

/// Trajectory with a fixed, bent arm and a wrist following `wrist(t)`; the
/// hand joints ride rigidly on the wrist.
fn scripted_trajectory(n: usize, dt: f64, wrist: impl Fn(f64) -> P) -> JointTrajectory {
    let mut tracks: BTreeMap<Role, Vec<Vector3<f64>>> = BTreeMap::new();
    for hand in Hand::BOTH {
        let side = if hand == Hand::Left { 1.0 } else { -1.0 };
        for f in 0..n {
            let w = wrist(f as f64 * dt);
            let w = [w[0] * side, w[1], w[2]];
            let at = |p: P| Vector3::new(p[0], p[1], p[2]);
            for kind in JointKind::ALL {
                let p = match kind {
                    JointKind::Shoulder => [0.2 * side, 1.45, 0.0],
                    JointKind::Elbow => [0.3 * side, 1.2, 0.1],
                    JointKind::Wrist => w,
                    JointKind::WristBase => add(w, [0.03 * side, 0.0, 0.0]),
                    JointKind::IndexTip => add(w, [0.12 * side, 0.0, 0.03]),
                    JointKind::MiddleTip => add(w, [0.13 * side, 0.0, 0.01]),
                    JointKind::RingTip => add(w, [0.12 * side, 0.0, -0.01]),
                    JointKind::PinkyTip => add(w, [0.10 * side, 0.0, -0.03]),
                };
                tracks.entry(Role::new(hand, kind)).or_default().push(at(p));
            }
        }
    }
    JointTrajectory::new("scripted", dt, tracks).expect("equal track lengths")
}

/// Random serial chain with mixed rotation orders and one end site.
fn random_chain(rng: &mut ChaCha8Rng) -> (Skeleton, MotionClip, JointMap) {
    let orders = [
        [Channel::Xrotation, Channel::Yrotation, Channel::Zrotation],
        [Channel::Zrotation, Channel::Xrotation, Channel::Yrotation],
        [Channel::Yrotation, Channel::Zrotation, Channel::Xrotation],
        [Channel::Zrotation, Channel::Yrotation, Channel::Xrotation],
    ];
    let mut joints = Vec::new();
    for i in 0..6 {
        let mut channels = orders[rng.gen_range(0..orders.len())].to_vec();
        if i == 0 {
            let mut pos = vec![Channel::Xposition, Channel::Yposition, Channel::Zposition];
            pos.extend(channels);
            channels = pos;
        }
        joints.push(Joint {
            name: format!("J{i}"),
            parent: if i == 0 { None } else { Some(i - 1) },
            offset: Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)),
            channels,
        });
    }
    let sites = vec![EndSite {
        name: "J5_end".into(),
        parent: 5,
        offset: Vector3::new(0.1, 0.05, -0.02),
    }];
    let skeleton = Skeleton::new(joints, sites).expect("valid chain");
    let n_frames = 20;
    let data: Vec<f64> = (0..n_frames * skeleton.channel_count()).map(|_| rng.gen_range(-180.0..180.0)).collect();
    let motion = MotionClip::new("chain", 0.01, skeleton.channel_count(), data).expect("valid chain motion");
    let nodes = ["J0", "J1", "J2", "J3", "J4", "J5", "J5_end"];
    let map: JointMap = Role::all().enumerate().map(|(k, r)| (r, nodes[k % nodes.len()].to_string())).collect();
    (skeleton, motion, map)
}

struct CorpusFixture {
    strokes: Vec<StrokeRecord>,
    params: Vec<GestureParams>,
    durations: BTreeMap<String, f64>,
    trajectories: BTreeMap<String, JointTrajectory>,
}

fn corpus_fixture(strokes: usize, seed: u64) -> CorpusFixture {
    let corpus = generate(&SynthConfig::with_strokes(strokes, seed));
    let mut fx = CorpusFixture {
        strokes: Vec::new(),
        params: Vec::new(),
        durations: BTreeMap::new(),
        trajectories: BTreeMap::new(),
    };
    for clip in &corpus.clips {
        let t = corpus.trajectory(clip).expect("synthetic clip has every role");
        for s in &clip.strokes {
            fx.params.push(extract_all(s, &t, MajorAxisMode::FarthestPair).expect("synthetic stroke extracts"));
            fx.strokes.push(s.clone());
        }
        fx.durations.insert(clip.clip_id.clone(), clip.duration());
        fx.trajectories.insert(clip.clip_id.clone(), t);
    }
    fx
}

// ---------------------------------------------------------------------------
// Criteria

fn extraction_oracles() -> Outcome {
    let start = Instant::now();
    let (skeleton, map) = synthetic_skeleton();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_m = 0.0f64;
    let mut worst_deg = 0.0f64;
    for k in 0..100 {
        let motion = random_clip(&mut rng, &skeleton, k);
        let traj = forward_kinematics(&skeleton, &motion, &map).map_err(|e| e.to_string())?;
        let oracle = oracle_fk(&skeleton, &motion, &map);
        let n = motion.num_frames();
        let dt = motion.frame_time();
        let first = rng.gen_range(0..n / 4);
        let last = rng.gen_range(3 * n / 4..n);
        let s = stroke(&format!("s{k}"), motion.clip_id(), "A", first, last, dt);
        let got = extract_all(&s, &traj, MajorAxisMode::FarthestPair).map_err(|e| format!("fixture {k}: {e}"))?;
        for hand in Hand::BOTH {
            let track = |kind| &oracle[&Role::new(hand, kind)][first..=last];
            let wrist = track(JointKind::Wrist);
            let tips: Vec<Vec<P>> = JointKind::FINGERTIPS.iter().map(|&kd| track(kd).to_vec()).collect();
            let checks = [
                (Parameter::PathLength, oracle_path_length(wrist)),
                (Parameter::MaxVelocity, oracle_max_velocity(wrist, dt)),
                (Parameter::MajorAxisLength, oracle_major_axis(wrist)),
                (Parameter::HandOpening, oracle_hand_opening(track(JointKind::WristBase), &tips)),
            ];
            for (p, want) in checks {
                let diff = (got.get(p, hand) - want).abs();
                worst_m = worst_m.max(diff);
                ensure(diff < 1e-9, || format!("fixture {k} {hand} {p}: {} vs oracle {want}", got.get(p, hand)))?;
            }
            let want = oracle_swivel(track(JointKind::Shoulder), track(JointKind::Elbow), wrist)?;
            let diff = (got.get(Parameter::ArmSwivel, hand) - want).abs();
            worst_deg = worst_deg.max(diff);
            ensure(diff < 1e-6, || format!("fixture {k} {hand} swivel: {} vs oracle {want}", got.get(Parameter::ArmSwivel, hand)))?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("100 fixtures, worst {worst_m:.1e} m, {worst_deg:.1e} deg"))
}

fn analytic_kinematics() -> Outcome {
    let dt = 0.01;
    let stroke_of = |n: usize| stroke("s", "scripted", "A", 0, n - 1, dt);

    let (amp, hz) = (0.1, 1.0);
    let n = 201;
    let traj = scripted_trajectory(n, dt, |t| [0.45 + amp * (std::f64::consts::TAU * hz * t).sin(), 1.1, 0.3]);
    let got = extract_all(&stroke_of(n), &traj, MajorAxisMode::FarthestPair).map_err(|e| e.to_string())?;
    let expected = std::f64::consts::TAU * hz * amp;
    let sine_err = (got.get(Parameter::MaxVelocity, Hand::Left) / expected - 1.0).abs();
    ensure(sine_err < 0.03, || format!("sinusoid max velocity off by {:.2}%", 100.0 * sine_err))?;

    // Speed rising 0 -> 0.6 m/s over 0.3 s, then decaying over 0.5 s.
    let speed: Vec<f64> = (0..=80)
        .map(|k| if k <= 30 { 0.02 * k as f64 } else { 0.6 * (1.0 - (k - 30) as f64 / 50.0) })
        .collect();
    let accel = initial_acceleration(&speed, dt).map_err(|e| e.to_string())?;
    let ramp_err = (accel / 2.0 - 1.0).abs();
    ensure(ramp_err < 0.01, || format!("ramp initial acceleration {accel} (off by {:.2}%)", 100.0 * ramp_err))?;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (sk, motion, map) = random_chain(&mut rng);
        let traj = forward_kinematics(&sk, &motion, &map).map_err(|e| e.to_string())?;
        for (role, want) in oracle_fk(&sk, &motion, &map) {
            for (f, p) in traj.track(role).map_err(|e| e.to_string())?.iter().enumerate() {
                worst = worst.max(dist(arr(p), want[f]));
            }
        }
    }
    ensure(worst < 1e-9, || format!("FK differs from the matrix stack by {worst:e} m"))?;
    Ok(format!(
        "sinusoid {:.2}% off, ramp {:.2}% off, FK worst {worst:.1e} m",
        100.0 * sine_err,
        100.0 * ramp_err
    ))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let (t, d, b) = (7, 5, 3);
    let cfg = ModelConfig {
        hidden_size: 8,
        ..ModelConfig::new(d)
    };
    let h = 1e-4;
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::new(cfg.clone(), Weights::init(&cfg, &mut rng));
        let seqs: Vec<Vec<Vec<f64>>> =
            (0..b).map(|_| (0..t).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()).collect();
        let batch = Batch::from_nested(&seqs).map_err(|e| e.to_string())?;
        let masks = DropoutMasks::sample(b, &cfg, &mut rng);
        let targets = Array2::from_shape_simple_fn((b, 2), || rng.gen_range(0.0..1.0));
        let (_, grad, _) = loss_and_gradients(&net, &batch, &targets, &masks).map_err(|e| e.to_string())?;
        let loss_at = |w: &Weights| -> f64 {
            let out = Network::new(cfg.clone(), w.clone())
                .forward(&batch, Mode::Train, Some(&masks))
                .expect("forward pass")
                .output;
            let mut sum = 0.0;
            for (o, y) in out.iter().zip(targets.iter()) {
                sum += (o - y) * (o - y);
            }
            sum / out.len() as f64
        };
        for (k, (name, _, g)) in grad.tensors().iter().enumerate() {
            for i in 0..g.len() {
                // Fourth-order central stencil; the second-order one leaves
                // truncation error comparable to the smallest entries.
                let at = |step: f64| {
                    let mut w = net.weights.clone();
                    w.tensors_mut()[k][i] += step;
                    loss_at(&w)
                };
                let numeric = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
                // The floor keeps near-zero entries from comparing roundoff to roundoff.
                let rel = (g[i] - numeric).abs() / g[i].abs().max(numeric.abs()).max(1e-8);
                worst = worst.max(rel);
                ensure(rel < 1e-4, || format!("seed {seed} {name}[{i}]: analytic {:e} numeric {numeric:e}", g[i]))?;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!("10 seeds, worst relative error {worst:.1e}"))
}

fn learnability() -> Outcome {
    let start = Instant::now();
    let corpus = generate(&SynthConfig::with_strokes(500, 41));
    let mut windows: Vec<StrokeWindow> = Vec::new();
    let mut path_lengths = Vec::new();
    let mut datasets = Vec::new();
    for clip in &corpus.clips {
        let features = assemble_features(&clip.audio, FeatureSet::MfccPitchEnergy, None).map_err(|e| e.to_string())?;
        let traj = corpus.trajectory(clip).map_err(|e| e.to_string())?;
        for s in &clip.strokes {
            windows.push(window_for_stroke(s, &features, clip.duration()).map_err(|e| e.to_string())?);
            path_lengths.push(extract_all(s, &traj, MajorAxisMode::FarthestPair).map_err(|e| e.to_string())?.pair(Parameter::PathLength));
            datasets.push(s.dataset_id.clone());
        }
    }
    let energy_col = windows[0].features.names().iter().position(|n| n == "log_energy").ok_or("no log_energy column")?;
    let mean_energy: Vec<f64> = windows
        .iter()
        .map(|w| (0..w.valid_len).map(|t| w.features.row(t)[energy_col]).sum::<f64>() / w.valid_len as f64)
        .collect();
    let (lo, hi) = mean_energy.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let target: Vec<f64> = mean_energy.iter().map(|v| (v - lo) / (hi - lo)).collect();

    let ids: Vec<String> = windows.iter().map(|w| w.stroke_id.clone()).collect();
    let split = make_split(&ids, 5, 0.1, 0.1).map_err(|e| e.to_string())?;
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let pick = |set: &[String]| -> Vec<usize> { set.iter().map(|s| index[s.as_str()]).collect() };
    let (tr, va, te) = (pick(&split.train), pick(&split.validation), pick(&split.test));

    let norm = FeatureNormalizer::fit(tr.iter().map(|&i| &windows[i].features)).map_err(|e| e.to_string())?;
    let raw_targets: Vec<[f64; 2]> = target.iter().map(|&v| [v, v]).collect();
    let tnorm = TargetNormalizer::fit(&tr.iter().map(|&i| raw_targets[i]).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
    let samples = |set: &[usize]| -> Result<Vec<Sample>, String> {
        set.iter()
            .map(|&i| {
                Ok(Sample {
                    stroke_id: ids[i].clone(),
                    features: norm.apply(&windows[i].features).map_err(|e| e.to_string())?,
                    target: tnorm.normalize(raw_targets[i]),
                })
            })
            .collect()
    };
    let (train_set, val_set, test_set) = (samples(&tr)?, samples(&va)?, samples(&te)?);
    let cfg = ModelConfig {
        ff_size: 16,
        hidden_size: 16,
        learning_rate: 3e-3,
        epochs: 25,
        batch_size: 16,
        seed: 3,
        ..ModelConfig::new(windows[0].features.dim())
    };
    let outcome = train(&cfg, &train_set, &val_set).map_err(|e| e.to_string())?;
    let refs: Vec<_> = test_set.iter().map(|s| &s.features).collect();
    let pred = outcome.network.infer(&Batch::from_windows(&refs).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let model_err: Vec<f64> = pred
        .iter()
        .zip(&te)
        .map(|(p, &i)| (tnorm.denormalize(*p)[0] - target[i]).abs())
        .collect();
    let model_mean = model_err.iter().sum::<f64>() / model_err.len() as f64;

    let base_stroke = |i: usize| BaselineStroke {
        stroke_id: ids[i].clone(),
        dataset_id: datasets[i].clone(),
        value: HandPair::new(target[i], target[i]),
        path_length: path_lengths[i],
    };
    let pool: Vec<BaselineStroke> = (0..ids.len()).map(base_stroke).collect();
    let targets: Vec<BaselineStroke> = te.iter().map(|&i| base_stroke(i)).collect();
    let base = random_baseline(&targets, &pool, &BaselineConfig::new(Restriction::PathLength, 11)).map_err(|e| e.to_string())?;
    let base_mean = base.summary.left.mean;
    let reduction = 100.0 * (base_mean - model_mean) / base_mean;
    let elapsed = start.elapsed();
    ensure(reduction >= 40.0, || {
        format!("reduction {reduction:.1}% (model {model_mean:.4}, baseline {base_mean:.4}, best epoch {})", outcome.best_epoch)
    })?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} test strokes, model {model_mean:.4} vs baseline {base_mean:.4}: {reduction:.1}% reduction in {:.0} s",
        te.len(),
        elapsed.as_secs_f64()
    ))
}

fn sampler() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pool: Vec<BaselineStroke> = (0..200)
        .map(|i| BaselineStroke {
            stroke_id: format!("s{i:03}"),
            dataset_id: ["A", "B", "C"][rng.gen_range(0..3)].into(),
            value: HandPair::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)),
            path_length: HandPair::new(rng.gen_range(0.05..0.9), rng.gen_range(0.05..0.9)),
        })
        .collect();
    let result = random_baseline(&pool, &pool, &BaselineConfig::new(Restriction::PathLength, 4)).map_err(|e| e.to_string())?;

    // Population standard deviation of path length per dataset and hand.
    let std_of = |ds: &str, hand: Hand| -> f64 {
        let v: Vec<f64> = pool.iter().filter(|s| s.dataset_id == ds).map(|s| *s.path_length.get(hand)).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let by_id: BTreeMap<&str, &BaselineStroke> = pool.iter().map(|s| (s.stroke_id.as_str(), s)).collect();
    ensure(result.draws.len() == 3 * 2 * pool.len(), || format!("{} draws", result.draws.len()))?;
    for d in &result.draws {
        let (t, donor) = (by_id[d.target.as_str()], by_id[d.donor.as_str()]);
        let std = std_of(&t.dataset_id, d.hand);
        let (pl, pd) = (*t.path_length.get(d.hand), *donor.path_length.get(d.hand));
        ensure(pl - std / 4.0 < pd && pd < pl + std / 4.0, || format!("draw {d:?} outside the band"))?;
        ensure(donor.dataset_id == t.dataset_id && donor.stroke_id != t.stroke_id, || format!("draw {d:?} crosses datasets"))?;
    }
    for hand in Hand::BOTH {
        let (mut share_sum, mut elig, mut cand) = (0.0, 0usize, 0usize);
        for t in &pool {
            let std = std_of(&t.dataset_id, hand);
            let pl = *t.path_length.get(hand);
            let mut c = 0;
            let mut e = 0;
            for d in &pool {
                if d.dataset_id != t.dataset_id || d.stroke_id == t.stroke_id {
                    continue;
                }
                c += 1;
                let p = *d.path_length.get(hand);
                if pl - std / 4.0 < p && p < pl + std / 4.0 {
                    e += 1;
                }
            }
            share_sum += e as f64 / c as f64;
            elig += e;
            cand += c;
        }
        let got = result.eligible.get(hand);
        let per_target = share_sum / pool.len() as f64;
        let aggregate = elig as f64 / cand as f64;
        ensure(got.per_target_mean == per_target && got.aggregate == aggregate, || {
            format!("{hand}: eligible fraction {got:?}, enumeration gives {per_target} / {aggregate}")
        })?;
    }
    Ok(format!(
        "{} draws in band; eligible fraction L {:.4} R {:.4}",
        result.draws.len(),
        result.eligible.left.aggregate,
        result.eligible.right.aggregate
    ))
}

fn wilcoxon() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut worst_exact = 0.0f64;
    for n in 1..=15 {
        for _ in 0..6 {
            // One decimal so that tied magnitudes occur.
            let a: Vec<f64> = (0..n).map(|_| (rng.gen_range(-2.0f64..2.0) * 10.0).round() / 10.0).collect();
            let b = vec![0.0; n];
            if a.iter().all(|v| *v == 0.0) {
                continue;
            }
            let w = wilcoxon_paired(&a, &b, WilcoxonMethod::Exact).map_err(|e| e.to_string())?;
            let want = oracle_wilcoxon_p(&a);
            worst_exact = worst_exact.max((w.p - want).abs());
            ensure((w.p - want).abs() < 1e-12, || format!("n={n} {a:?}: p {} vs enumeration {want}", w.p))?;
        }
    }
    let five = wilcoxon_paired(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5], WilcoxonMethod::Auto).map_err(|e| e.to_string())?;
    ensure(five.p == 0.0625, || format!("all-positive n=5 gives p {}", five.p))?;
    let mut worst_normal = 0.0f64;
    for n in 16..=20 {
        for _ in 0..10 {
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) + 0.2).collect();
            let b = vec![0.0; n];
            let exact = wilcoxon_paired(&a, &b, WilcoxonMethod::Exact).map_err(|e| e.to_string())?.p;
            let normal = wilcoxon_paired(&a, &b, WilcoxonMethod::Normal).map_err(|e| e.to_string())?.p;
            worst_normal = worst_normal.max((exact - normal).abs());
        }
    }
    ensure(worst_normal < 0.02, || format!("normal approximation off by {worst_normal}"))?;
    Ok(format!("exact worst {worst_exact:.1e}, n=5 p {}, normal worst {worst_normal:.4}", five.p))
}

fn table_formatting() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let printed = parse_table_csv(&std::fs::read_to_string(dir.join("published_table.csv")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let cells_text = std::fs::read_to_string(dir.join("published_table_cells.txt")).map_err(|e| e.to_string())?;
    let reports: Vec<ErrorReport> = printed
        .iter()
        .map(|r| {
            let k = r.parameter.report_scale();
            let s = |m: &HandPair<f64>, d: &HandPair<f64>| m.map(|h, v| ErrorSummary { mean: v / k, median: d.get(h) / k });
            ErrorReport::new(r.parameter, r.mad.map(|_, v| v / k), s(&r.mean, &r.median), s(&r.baseline_mean, &r.baseline_median))
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let table = emit_table(&reports, true).map_err(|e| e.to_string())?;
    let mut failures = Vec::new();
    for (row, line) in table.rows.iter().zip(cells_text.lines()) {
        let mut fields = line.split('|');
        let name = fields.next().unwrap_or_default();
        ensure(name == row.parameter.name(), || format!("row order: {name} vs {}", row.parameter))?;
        for (col, (got, want)) in row.cells().iter().zip(fields).enumerate() {
            if want.ends_with('%') {
                let g: i64 = got.trim_end_matches('%').parse().map_err(|_| format!("bad cell {got}"))?;
                let w: i64 = want.trim_end_matches('%').parse().map_err(|_| format!("bad cell {want}"))?;
                if (g - w).abs() > 1 {
                    failures.push(format!("{name} col {}: recomputed {got}, printed {want}", col + 1));
                }
            } else if got != want {
                failures.push(format!("{name} col {}: rendered `{got}`, printed `{want}`", col + 1));
            }
        }
    }
    if failures.is_empty() {
        Ok("all 54 cells reproduced".into())
    } else {
        Err(format!("{} cells off: {}", failures.len(), failures.join("; ")))
    }
}

fn manipulation() -> Outcome {
    let fx = corpus_fixture(160, 7);
    let mut fractions = Vec::new();
    for p in MANIPULABLE {
        for d in Direction::BOTH {
            let plan = build_plan(&fx.params, &fx.strokes, &fx.durations, p, d, &PlanConfig::new(1)).map_err(|e| format!("{p} {d}: {e}"))?;
            let seqs = execute_plan(&plan, &fx.strokes, &fx.trajectories).map_err(|e| format!("{p} {d}: {e}"))?;
            let report = verify_plan(&plan, &seqs).map_err(|e| format!("{p} {d}: {e}"))?;
            let frac = report.fraction_in_band();
            ensure(frac >= 0.8, || format!("{p} {d}: {}/{} in band", report.n_in_band, report.n_total))?;
            fractions.push(frac);
        }
    }

    let mut warped = 0;
    let mut worst_size = 0.0f64;
    let mut worst_vel = 0.0f64;
    let mut worst_seg = 0.0f64;
    for (s, g) in fx.strokes.iter().zip(&fx.params) {
        let t = &fx.trajectories[&s.clip_id];
        let iv = FrameInterval::from_seconds(s.start_s, s.end_s, t.frame_time, t.num_frames()).map_err(|e| e.to_string())?;
        let wrist_of = |tr: &JointTrajectory, hand: Hand| -> Vec<P> {
            tr.track(Role::new(hand, JointKind::Wrist)).expect("wrist track").iter().map(arr).collect()
        };
        for hand in Hand::BOTH {
            let big = scale_size(t, iv, hand, 2.0).map_err(|e| e.to_string())?;
            let before = oracle_path_length(&wrist_of(t, hand)[iv.first..=iv.last]);
            let after = oracle_path_length(&wrist_of(&big, hand)[iv.first..=iv.last]);
            worst_size = worst_size.max((after / before - 2.0).abs() / 2.0);

            let turned = rotate_swivel(t, iv, hand, 25.0).map_err(|e| e.to_string())?;
            let track = |tr: &JointTrajectory, k| -> Vec<P> { tr.track(Role::new(hand, k)).expect("arm track").iter().map(arr).collect() };
            let (s0, e0, w0) = (track(t, JointKind::Shoulder), track(t, JointKind::Elbow), track(t, JointKind::Wrist));
            let (s1, e1, w1) = (track(&turned, JointKind::Shoulder), track(&turned, JointKind::Elbow), track(&turned, JointKind::Wrist));
            for f in iv.first..=iv.last {
                worst_seg = worst_seg.max((dist(e1[f], s1[f]) - dist(e0[f], s0[f])).abs());
                worst_seg = worst_seg.max((dist(w1[f], e1[f]) - dist(w0[f], e0[f])).abs());
            }
        }
        // The fixed five-frame smoothing blurs short strokes differently at
        // half the duration; the doubling holds for strokes of 100+ frames.
        if iv.len() >= 100 {
            warped += 1;
            let (fast, fast_iv, _) = warp_uniform(t, iv, 0.5).map_err(|e| e.to_string())?;
            let fast_stroke = StrokeRecord {
                start_s: fast_iv.first as f64 * t.frame_time,
                end_s: fast_iv.last as f64 * t.frame_time,
                ..s.clone()
            };
            let after = extract_all(&fast_stroke, &fast, MajorAxisMode::FarthestPair).map_err(|e| e.to_string())?;
            for hand in Hand::BOTH {
                let ratio = after.get(Parameter::MaxVelocity, hand) / g.get(Parameter::MaxVelocity, hand);
                worst_vel = worst_vel.max((ratio - 2.0).abs() / 2.0);
            }
        }
    }
    ensure(worst_size < 1e-3, || format!("size x2 changes path length by factor off {:.3}%", 100.0 * worst_size))?;
    ensure(warped > 0, || "no stroke spans 100 frames".to_string())?;
    ensure(worst_vel < 0.01, || format!("time warp x0.5 velocity ratio off by {:.2}%", 100.0 * worst_vel))?;
    ensure(worst_seg < 1e-9, || format!("swivel edit changes a segment length by {worst_seg:e} m"))?;
    let min = fractions.iter().copied().fold(1.0, f64::min);
    Ok(format!(
        "lowest in-band fraction {min:.2}; size {:.1e}, warp {:.2}% over {warped} strokes, segments {worst_seg:.1e} m",
        worst_size,
        100.0 * worst_vel
    ))
}

fn pipeline_run(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    cmd_synth(dir, None, 7).map_err(|e| format!("{e:#}"))?;
    let config = RunConfig::load(&dir.join("gesturekit.toml")).map_err(|e| e.to_string())?;
    let ctx = Context::from_config(config);
    cmd_extract(&ctx).map_err(|e| format!("{e:#}"))?;
    let opts = TrainOptions {
        epochs: Some(20),
        length_only: false,
    };
    cmd_train(&ctx, Parameter::MaxVelocity, &opts).map_err(|e| format!("{e:#}"))?;
    cmd_evaluate(&ctx, Some(Parameter::MaxVelocity), Subset::Test).map_err(|e| format!("{e:#}"))?;
    let root = &ctx.layout.root;
    let files = [
        "extract/params.csv",
        "train/velocity/checkpoint.json",
        "train/velocity/log.csv",
        "evaluate/reports.json",
        "evaluate/statistics.json",
        "evaluate/details.json",
        "evaluate/table.csv",
        "evaluate/predictions.csv",
    ];
    files
        .iter()
        .map(|f| std::fs::read(root.join(f)).map(|b| (f.to_string(), b)).map_err(|e| format!("{f}: {e}")))
        .collect()
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline_run(a.path())?;
    let second = pipeline_run(b.path())?;
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        ensure(x == y, || format!("{name} differs between runs"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(600), || format!("took {elapsed:?}"))?;
    Ok(format!("{} files identical across two runs in {:.0} s", first.len(), elapsed.as_secs_f64()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("extraction matches brute-force oracles", extraction_oracles),
        ("analytic kinematics and FK", analytic_kinematics),
        ("gradients match finite differences", gradient_check),
        ("model beats the restricted random baseline", learnability),
        ("path-length restricted sampler", sampler),
        ("signed-rank test", wilcoxon),
        ("report table reproduces printed cells", table_formatting),
        ("manipulation closed loop", manipulation),
        ("end-to-end determinism", determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|k| k != n) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS  {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n}: FAIL  {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
