use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bands::DEFAULT_TARGET_FRACTION;
use super::manipulate::{apply_manipulation, FrameSource, ManipulationResult};
use super::select::{select_sequences, CandidateWindow, ClassifiedStroke, SelectionConfig};
use super::{compute_bands, Band, Direction, ExpressionClass, StimulusError};
use crate::corpus::StrokeRecord;
use crate::hand::HandPair;
use crate::mocap::JointTrajectory;
use crate::params::{GestureParams, Parameter};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub selection: SelectionConfig,
    /// Where targets sit between the band edge (0) and the corpus extreme (1).
    pub target_fraction: f64,
}

impl PlanConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            selection: SelectionConfig::new(seed),
            target_fraction: DEFAULT_TARGET_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedWindow {
    pub index: usize,
    #[serde(flatten)]
    pub window: CandidateWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrokeTarget {
    pub stroke_id: String,
    pub window_index: usize,
    pub original: HandPair<f64>,
    pub original_class: HandPair<ExpressionClass>,
    pub target: HandPair<f64>,
}

/// Which windows to edit and what every stroke in them should become.
/// Serializable so a plan can be reviewed before it is executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusPlan {
    pub parameter: Parameter,
    pub direction: Direction,
    pub target_class: ExpressionClass,
    pub band: HandPair<Band>,
    pub config: PlanConfig,
    pub windows: Vec<PlannedWindow>,
    pub targets: Vec<StrokeTarget>,
}

impl StimulusPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Bands come from `params` (the whole corpus); windows are chosen among
/// `strokes` using each clip's duration.
pub fn build_plan(
    params: &[GestureParams],
    strokes: &[StrokeRecord],
    clip_durations: &BTreeMap<String, f64>,
    parameter: Parameter,
    direction: Direction,
    cfg: &PlanConfig,
) -> Result<StimulusPlan, StimulusError> {
    let bands = compute_bands(params)?;
    let band = *bands.pair(parameter);
    let target = HandPair::try_from_fn(|h| {
        band.get(h)
            .target(direction, cfg.target_fraction)
            .ok_or(StimulusError::NoRoom { parameter, hand: h })
    })?;
    let by_id: BTreeMap<&str, &GestureParams> = params.iter().map(|p| (p.stroke_id.as_str(), p)).collect();
    let mut classified = Vec::new();
    for s in strokes {
        let p = by_id
            .get(s.stroke_id.as_str())
            .ok_or_else(|| StimulusError::UnknownStroke(s.stroke_id.clone()))?;
        classified.push(ClassifiedStroke {
            stroke_id: s.stroke_id.clone(),
            clip_id: s.clip_id.clone(),
            start_s: s.start_s,
            end_s: s.end_s,
            classes: HandPair::from_fn(|h| band.get(h).classify(p.get(parameter, h))),
        });
    }
    let chosen = select_sequences(&classified, clip_durations, direction, &cfg.selection)?;
    let mut targets = Vec::new();
    for (index, w) in chosen.iter().enumerate() {
        for id in &w.stroke_ids {
            let p = by_id[id.as_str()];
            let original = p.pair(parameter);
            targets.push(StrokeTarget {
                stroke_id: id.clone(),
                window_index: index,
                original,
                original_class: HandPair::from_fn(|h| band.get(h).classify(*original.get(h))),
                target,
            });
        }
    }
    Ok(StimulusPlan {
        parameter,
        direction,
        target_class: direction.target_class(),
        band,
        config: *cfg,
        windows: chosen
            .into_iter()
            .enumerate()
            .map(|(index, window)| PlannedWindow { index, window })
            .collect(),
        targets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedStroke {
    pub stroke_id: String,
    pub reason: String,
}

/// One window after all of its strokes were edited. Stroke times in
/// `results` are relative to the window start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditedSequence {
    pub window_index: usize,
    pub clip_id: String,
    /// First frame of the window in the source clip.
    pub first_frame: usize,
    #[serde(skip)]
    pub trajectory: Option<JointTrajectory>,
    /// Source frame (relative to `first_frame`) of every output frame.
    pub frame_source: FrameSource,
    /// Whether each output frame was edited in place (not just retimed),
    /// per arm.
    pub spatial_frames: HandPair<Vec<bool>>,
    pub results: Vec<ManipulationResult>,
    pub skipped: Vec<SkippedStroke>,
}

impl EditedSequence {
    pub fn trajectory(&self) -> &JointTrajectory {
        self.trajectory.as_ref().expect("trajectory kept in memory")
    }

    pub fn sequence_id(&self, plan: &StimulusPlan) -> String {
        format!("{}_{}_{:02}", plan.parameter.name(), plan.direction, self.window_index)
    }
}

fn cut(traj: &JointTrajectory, first: usize, last: usize, id: String) -> Result<JointTrajectory, StimulusError> {
    let tracks = traj
        .tracks()
        .iter()
        .map(|(role, t)| (*role, t[first..=last].to_vec()))
        .collect();
    Ok(JointTrajectory::new(id, traj.frame_time, tracks)?)
}

/// Cuts every planned window out of its clip and edits its strokes, latest
/// first so retiming one stroke never moves a stroke not yet edited.
/// Strokes whose edit is impossible are reported, not fatal.
pub fn execute_plan(
    plan: &StimulusPlan,
    strokes: &[StrokeRecord],
    trajectories: &BTreeMap<String, JointTrajectory>,
) -> Result<Vec<EditedSequence>, StimulusError> {
    let by_id: BTreeMap<&str, &StrokeRecord> = strokes.iter().map(|s| (s.stroke_id.as_str(), s)).collect();
    let targets: BTreeMap<&str, &StrokeTarget> = plan.targets.iter().map(|t| (t.stroke_id.as_str(), t)).collect();
    let mut out = Vec::with_capacity(plan.windows.len());
    for pw in &plan.windows {
        let w = &pw.window;
        let full = trajectories
            .get(&w.clip_id)
            .ok_or_else(|| StimulusError::UnknownClip(w.clip_id.clone()))?;
        let ft = full.frame_time;
        let first = (w.start_s / ft).round() as usize;
        let last = ((w.end_s / ft).round() as usize).min(full.num_frames() - 1);
        let id = format!("{}_{}_{:02}", plan.parameter.name(), plan.direction, pw.index);
        let mut traj = cut(full, first, last, id)?;
        let offset = first as f64 * ft;

        let mut local: Vec<StrokeRecord> = w
            .stroke_ids
            .iter()
            .map(|sid| {
                let s = by_id
                    .get(sid.as_str())
                    .ok_or_else(|| StimulusError::UnknownStroke(sid.clone()))?;
                Ok(StrokeRecord {
                    start_s: s.start_s - offset,
                    end_s: s.end_s - offset,
                    ..(*s).clone()
                })
            })
            .collect::<Result<_, StimulusError>>()?;
        local.sort_by(|a, b| b.start_s.total_cmp(&a.start_s));

        let mut source = FrameSource::identity(traj.num_frames());
        let mut spatial = HandPair::new(vec![false; traj.num_frames()], vec![false; traj.num_frames()]);
        let mut results: Vec<ManipulationResult> = Vec::new();
        let mut skipped = Vec::new();
        for stroke in &local {
            let target = targets
                .get(stroke.stroke_id.as_str())
                .ok_or_else(|| StimulusError::UnknownStroke(stroke.stroke_id.clone()))?;
            let mut result = match apply_manipulation(stroke, &traj, plan.parameter, target.target, &plan.band) {
                Ok(r) => r,
                Err(e) => {
                    skipped.push(SkippedStroke {
                        stroke_id: stroke.stroke_id.clone(),
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let edited = result.trajectory.take().expect("fresh result holds its trajectory");
            let shift = edited.num_frames() as f64 - traj.num_frames() as f64;
            if shift != 0.0 {
                for later in &mut results {
                    later.stroke.start_s += shift * ft;
                    later.stroke.end_s += shift * ft;
                }
            }
            spatial = HandPair::from_fn(|h| {
                let before = spatial.get(h);
                let mut now: Vec<bool> = result
                    .frame_source
                    .arms
                    .get(h)
                    .iter()
                    .map(|&x| before[(x.round() as usize).min(before.len() - 1)])
                    .collect();
                if result.spatial && *result.setting.get(h) != neutral_setting(plan.parameter) {
                    let (a, b) = interval_frames(&result.stroke, ft, now.len());
                    now[a..=b].iter_mut().for_each(|v| *v = true);
                }
                now
            });
            source = result.frame_source.then(&source);
            traj = edited;
            results.push(result);
        }
        results.reverse();
        skipped.reverse();
        out.push(EditedSequence {
            window_index: pw.index,
            clip_id: w.clip_id.clone(),
            first_frame: first,
            trajectory: Some(traj),
            frame_source: source,
            spatial_frames: spatial,
            results,
            skipped,
        });
    }
    Ok(out)
}

fn neutral_setting(p: Parameter) -> f64 {
    if p == Parameter::ArmSwivel {
        0.0
    } else {
        1.0
    }
}

fn interval_frames(stroke: &StrokeRecord, ft: f64, n: usize) -> (usize, usize) {
    let a = ((stroke.start_s / ft).round() as usize).min(n - 1);
    let b = ((stroke.end_s / ft).round() as usize).min(n - 1);
    (a, b)
}
