use std::collections::BTreeMap;

use anyhow::{Context as _, Result};
use gesturekit::audio::{assemble_features_with, parse_wav, write_feature_cache, ExternalFeatures, FeatureMatrix, FeatureSet};
use gesturekit::corpus::{load_labels_lenient, ClipInfo, Manifest, ManifestEntry, RejectedStroke, StrokeRecord};
use gesturekit::mocap::{forward_kinematics, parse_bvh_scaled, JointTrajectory};
use gesturekit::params::{extract_all, write_params_csv, GestureParams};
use gesturekit::Role;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::store::{self, ClipRecord};
use crate::Context;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlitchRecord {
    pub clip_id: String,
    pub role: Role,
    pub frame: usize,
    pub displacement_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub clips: usize,
    pub strokes_accepted: usize,
    pub strokes_rejected: usize,
    pub rejected: Vec<RejectedStroke>,
    pub glitches: Vec<GlitchRecord>,
    /// Clips whose audio and motion durations differ by more than one
    /// motion frame: `(clip_id, audio_s, motion_s)`.
    pub duration_mismatches: Vec<(String, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ExtractSummary {
    pub params: Vec<GestureParams>,
    pub qa: QaReport,
}

struct ClipOutput {
    record: ClipRecord,
    trajectory: JointTrajectory,
    features: FeatureMatrix,
    audio_s: f64,
}

fn process_clip(ctx: &Context, manifest: &Manifest, entry: &ManifestEntry) -> Result<ClipOutput> {
    let cfg = &ctx.config;
    let bvh_path = manifest.resolve(&entry.bvh_path);
    let scale = cfg.scale_factors.get(&entry.dataset_id).copied().unwrap_or(entry.scale_factor);
    let text = store::read_text(&bvh_path).with_context(|| format!("clip {}", entry.clip_id))?;
    let (skeleton, motion) = parse_bvh_scaled(&text, &entry.clip_id, scale)
        .with_context(|| format!("clip {}: parsing {}", entry.clip_id, bvh_path.display()))?;
    let trajectory = forward_kinematics(&skeleton, &motion, &cfg.joint_map)
        .with_context(|| format!("clip {}: forward kinematics of {}", entry.clip_id, bvh_path.display()))?;

    let wav_path = manifest.resolve(&entry.audio_path);
    let bytes = std::fs::read(&wav_path).with_context(|| format!("clip {}: reading {}", entry.clip_id, wav_path.display()))?;
    let audio = parse_wav(&bytes, &entry.clip_id)
        .with_context(|| format!("clip {}: decoding {}", entry.clip_id, wav_path.display()))?;
    let external = match (&cfg.feature_set, &cfg.external_features) {
        (FeatureSet::ExternalPrecomputed, Some(dir)) => {
            let path = dir.join(format!("{}.csv", entry.clip_id));
            let text = store::read_text(&path).with_context(|| format!("clip {}", entry.clip_id))?;
            Some(ExternalFeatures::parse_csv(&text).with_context(|| format!("clip {}: {}", entry.clip_id, path.display()))?)
        }
        _ => None,
    };
    let k = &cfg.constants;
    let features = assemble_features_with(&audio, cfg.feature_set, external.as_ref(), &k.mfcc(), &k.pitch())
        .with_context(|| format!("clip {}: features of {}", entry.clip_id, wav_path.display()))?;

    Ok(ClipOutput {
        record: ClipRecord {
            clip_id: entry.clip_id.clone(),
            dataset_id: entry.dataset_id.clone(),
            duration_s: motion.duration(),
            frame_time: motion.frame_time(),
            frames: motion.num_frames(),
            feature_rows: features.valid_len(),
            scale_factor: scale,
            bvh_path: bvh_path.display().to_string(),
        },
        trajectory,
        features,
        audio_s: audio.duration(),
    })
}

/// Runs extraction over the configured manifest and writes the parameter
/// CSV, stroke and clip lists, per-clip feature caches and the QA report.
pub fn cmd_extract(ctx: &Context) -> Result<ExtractSummary> {
    let manifest = Manifest::load(&ctx.config.manifest)
        .with_context(|| format!("loading manifest {}", ctx.config.manifest.display()))?;
    log::info!("extracting {} clips from {}", manifest.entries.len(), ctx.config.manifest.display());

    let outputs: Vec<ClipOutput> = ctx.pool(|| {
        manifest
            .entries
            .par_iter()
            .map(|e| process_clip(ctx, &manifest, e))
            .collect::<Result<Vec<_>>>()
    })??;

    let clip_infos: BTreeMap<String, ClipInfo> = outputs
        .iter()
        .map(|o| {
            (
                o.record.clip_id.clone(),
                ClipInfo {
                    dataset_id: o.record.dataset_id.clone(),
                    duration_s: o.record.duration_s,
                },
            )
        })
        .collect();
    let mut strokes = Vec::new();
    let mut rejected = Vec::new();
    for path in manifest.label_files() {
        let text = store::read_text(&path)?;
        let (kept, dropped) = load_labels_lenient(&text, &path.display().to_string(), &clip_infos)
            .with_context(|| format!("loading labels {}", path.display()))?;
        strokes.extend(kept);
        rejected.extend(dropped);
    }
    strokes.sort_by(|a: &StrokeRecord, b| a.clip_id.cmp(&b.clip_id).then(a.start_s.total_cmp(&b.start_s)));

    let trajectories: BTreeMap<&str, &JointTrajectory> =
        outputs.iter().map(|o| (o.record.clip_id.as_str(), &o.trajectory)).collect();
    let results: Vec<Result<GestureParams, String>> = ctx.pool(|| {
        strokes
            .par_iter()
            .map(|s| extract_all(s, trajectories[s.clip_id.as_str()], ctx.config.major_axis).map_err(|e| e.to_string()))
            .collect()
    })?;
    let mut accepted = Vec::new();
    let mut params = Vec::new();
    for (s, r) in strokes.into_iter().zip(results) {
        match r {
            Ok(p) => {
                params.push(p);
                accepted.push(s);
            }
            Err(reason) => {
                log::warn!("stroke {} rejected: {reason}", s.stroke_id);
                rejected.push(RejectedStroke {
                    stroke_id: s.stroke_id,
                    reason,
                })
            }
        }
    }

    let mut glitches = Vec::new();
    let mut duration_mismatches = Vec::new();
    for o in &outputs {
        for g in o.trajectory.glitches() {
            glitches.push(GlitchRecord {
                clip_id: o.record.clip_id.clone(),
                role: g.role,
                frame: g.frame,
                displacement_m: g.displacement,
            });
        }
        if (o.audio_s - o.record.duration_s).abs() > o.record.frame_time {
            duration_mismatches.push((o.record.clip_id.clone(), o.audio_s, o.record.duration_s));
        }
    }
    if !glitches.is_empty() {
        log::warn!("{} glitch frames, see {}", glitches.len(), ctx.layout.qa_json().display());
    }
    let qa = QaReport {
        clips: outputs.len(),
        strokes_accepted: params.len(),
        strokes_rejected: rejected.len(),
        rejected,
        glitches,
        duration_mismatches,
    };

    let layout = &ctx.layout;
    for o in &outputs {
        store::write(&layout.feature_cache(&o.record.clip_id), write_feature_cache(&o.features))?;
    }
    store::write(&layout.params_csv(), write_params_csv(&params))?;
    store::write_json(&layout.strokes_json(), &accepted)?;
    let records: Vec<&ClipRecord> = outputs.iter().map(|o| &o.record).collect();
    store::write_json(&layout.clips_json(), &records)?;
    store::write_json(&layout.qa_json(), &qa)?;
    log::info!(
        "{} strokes extracted, {} rejected; outputs in {}",
        qa.strokes_accepted,
        qa.strokes_rejected,
        layout.extract_dir().display()
    );
    Ok(ExtractSummary { params, qa })
}
