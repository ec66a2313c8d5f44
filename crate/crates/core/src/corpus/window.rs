use super::{CorpusError, StrokeRecord};
use crate::audio::FeatureMatrix;
use crate::constants::{CONTEXT_S, MAX_INPUT_FRAMES};
use crate::params::GestureParams;

/// Model input for one stroke: the stroke plus context, tail-padded.
#[derive(Debug, Clone, PartialEq)]
pub struct StrokeWindow {
    pub stroke_id: String,
    pub features: FeatureMatrix,
    pub valid_len: usize,
    pub targets: Option<GestureParams>,
}

/// `[start - context, end + context]` clamped to `[0, clip_duration]`.
pub fn window_span(stroke: &StrokeRecord, clip_duration: f64) -> (f64, f64) {
    (
        (stroke.start_s - CONTEXT_S).max(0.0),
        (stroke.end_s + CONTEXT_S).min(clip_duration),
    )
}

/// Cuts the stroke window out of full-clip features and pads it to the
/// fixed input length. The valid length is also bounded by the rows the
/// clip actually has.
pub fn window_for_stroke(
    stroke: &StrokeRecord,
    features: &FeatureMatrix,
    clip_duration: f64,
) -> Result<StrokeWindow, CorpusError> {
    let (ws, we) = window_span(stroke, clip_duration);
    let start = (ws / features.hop).round() as usize;
    let wanted = ((we - ws) / features.hop).round() as usize;
    let len = wanted
        .min(features.valid_len().saturating_sub(start))
        .min(MAX_INPUT_FRAMES);
    let window = features.slice_padded(start, len, MAX_INPUT_FRAMES)?;
    Ok(StrokeWindow {
        stroke_id: stroke.stroke_id.clone(),
        valid_len: window.valid_len(),
        features: window,
        targets: None,
    })
}
