use std::collections::{BTreeMap, BTreeSet};

use anyhow::{bail, Context as _, Result};
use gesturekit::corpus::{StrokeRecord, StrokeSource};
use gesturekit::mocap::{forward_kinematics, parse_bvh_scaled, scale_lengths, write_bvh, JointTrajectory, MotionClip, Skeleton};
use gesturekit::params::{GestureParams, MajorAxisMode, Parameter};
use gesturekit::stimuli::{
    build_plan, execute_plan, export_sequence_motion, verify_plan, Direction, EditedSequence, StimulusPlan,
    VerificationReport,
};
use serde::Serialize;

use crate::store::{self, ClipRecord, Extracted};
use crate::Context;

#[derive(Debug, Clone, Serialize)]
struct SequenceSummary<'a> {
    sequence_id: String,
    export_max_error_m: f64,
    #[serde(flatten)]
    sequence: &'a EditedSequence,
}

#[derive(Debug, Clone)]
pub struct StimuliSummary {
    pub plan: StimulusPlan,
    pub sequences: Vec<EditedSequence>,
    pub report: VerificationReport,
    /// Largest exported-motion deviation from the edited trajectory, per
    /// sequence, meters.
    pub export_errors: Vec<f64>,
}

fn load_clip(ctx: &Context, clip: &ClipRecord) -> Result<(Skeleton, MotionClip, JointTrajectory)> {
    let text = store::read_text(clip.bvh_path.as_ref())?;
    let (sk, motion) = parse_bvh_scaled(&text, &clip.clip_id, clip.scale_factor)
        .with_context(|| format!("clip {}: parsing {}", clip.clip_id, clip.bvh_path))?;
    let traj = forward_kinematics(&sk, &motion, &ctx.config.joint_map)
        .with_context(|| format!("clip {}: forward kinematics", clip.clip_id))?;
    Ok((sk, motion, traj))
}

/// Strokes (and their parameters) eligible for selection under the
/// configured dataset and label-source filters.
fn population(ctx: &Context, data: &Extracted) -> (Vec<GestureParams>, Vec<StrokeRecord>) {
    let f = &ctx.config.stimuli;
    let datasets: BTreeSet<&str> = f.datasets.iter().map(String::as_str).collect();
    data.params
        .iter()
        .zip(&data.strokes)
        .filter(|(_, s)| datasets.is_empty() || datasets.contains(s.dataset_id.as_str()))
        .filter(|(_, s)| !f.hand_labels_only || s.source == StrokeSource::Hand)
        .map(|(p, s)| (p.clone(), s.clone()))
        .unzip()
}

/// Plans, edits, verifies and exports the stimulus sequences for one
/// parameter and direction.
pub fn cmd_stimuli(ctx: &Context, p: Parameter, direction: Direction) -> Result<StimuliSummary> {
    if ctx.config.major_axis != MajorAxisMode::FarthestPair {
        bail!("stimulus editing re-extracts with the farthest-pair major axis; set major_axis = \"farthest_pair\"");
    }
    let data = Extracted::load(&ctx.layout)?;
    let (params, strokes) = population(ctx, &data);
    if strokes.is_empty() {
        bail!("no strokes left after the [stimuli] dataset and label filters");
    }
    let clip_ids: BTreeSet<&str> = strokes.iter().map(|s| s.clip_id.as_str()).collect();
    let durations: BTreeMap<String, f64> =
        data.durations().into_iter().filter(|(c, _)| clip_ids.contains(c.as_str())).collect();
    let cfg = ctx.config.constants.plan(ctx.config.seeds.stimuli);
    let plan = build_plan(&params, &strokes, &durations, p, direction, &cfg)
        .with_context(|| format!("planning {p} {direction} stimuli"))?;

    let mut sources = BTreeMap::new();
    let mut trajectories = BTreeMap::new();
    for pw in &plan.windows {
        let id = &pw.window.clip_id;
        if sources.contains_key(id) {
            continue;
        }
        let (sk, motion, traj) = load_clip(ctx, &data.clips[id])?;
        trajectories.insert(id.clone(), traj);
        sources.insert(id.clone(), (sk, motion));
    }
    let sequences = execute_plan(&plan, &strokes, &trajectories)?;
    let report = verify_plan(&plan, &sequences)?;

    let dir = ctx.layout.stimuli_dir(p, direction);
    let mut export_errors = Vec::new();
    let mut summaries = Vec::new();
    for seq in &sequences {
        let id = seq.sequence_id(&plan);
        let (sk, motion) = &sources[&seq.clip_id];
        let exported = export_sequence_motion(sk, &ctx.config.joint_map, motion, seq)
            .with_context(|| format!("exporting sequence {id}"))?;
        let scale = data.clips[&seq.clip_id].scale_factor;
        let (file_sk, file_motion) = scale_lengths(sk, &exported.clip, 1.0 / scale);
        store::write(&dir.join("bvh").join(format!("{id}.bvh")), write_bvh(&file_sk, &file_motion))?;
        store::write(&dir.join("tracks").join(format!("{id}.csv")), seq.trajectory().to_csv())?;
        export_errors.push(exported.max_error_m);
        summaries.push(SequenceSummary {
            sequence_id: id,
            export_max_error_m: exported.max_error_m,
            sequence: seq,
        });
    }
    store::write(&dir.join("plan.json"), plan.to_json())?;
    store::write_json(&dir.join("sequences.json"), &summaries)?;
    store::write(&dir.join("verification.csv"), report.to_csv())?;
    store::write_json(
        &dir.join("verification.json"),
        &serde_json::json!({
            "parameter": p,
            "direction": direction,
            "target_class": report.target_class,
            "n_total": report.n_total,
            "n_in_band": report.n_in_band,
            "n_skipped": report.n_skipped,
            "fraction_in_band": report.fraction_in_band(),
            "bands": plan.band,
        }),
    )?;
    let jumps: Vec<f64> = sequences
        .iter()
        .flat_map(|s| s.results.iter().flat_map(|r| [r.border_jump_m.left, r.border_jump_m.right]))
        .collect();
    log::info!(
        "{p} {direction}: {}/{} stroke-hands in the {} band, {} skipped; largest border jump {:.3} m; outputs in {}",
        report.n_in_band,
        report.n_total,
        report.target_class,
        report.n_skipped,
        jumps.iter().copied().fold(0.0, f64::max),
        dir.display()
    );
    Ok(StimuliSummary {
        plan,
        sequences,
        report,
        export_errors,
    })
}
