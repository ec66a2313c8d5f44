use std::path::PathBuf;

use anyhow::{Context as _, Result};
use gesturekit::audio::{length_only_features, FeatureNormalizer, FeatureSet};
use gesturekit::constants::MAX_INPUT_FRAMES;
use gesturekit::corpus::{make_split, window_for_stroke, Split, StrokeWindow};
use gesturekit::model::{train, Checkpoint, Sample, TargetNormalizer};
use gesturekit::params::Parameter;
use gesturekit::Hand;

use crate::store::{self, Extracted};
use crate::Context;

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Replaces the configured epoch count.
    pub epochs: Option<usize>,
    /// Also train the speech-length-only comparison model.
    pub length_only: bool,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub best_epoch: usize,
    pub best_validation_mse: f64,
}

pub(crate) fn feature_set_name(set: FeatureSet) -> &'static str {
    match set {
        FeatureSet::MfccPitchEnergy => "mfcc_pitch_energy",
        FeatureSet::ExternalPrecomputed => "external_precomputed",
    }
}

pub(crate) const LENGTH_ONLY: &str = "length_only";

/// Padded input windows for `ids`, in the given order.
pub(crate) fn stroke_windows(ctx: &Context, data: &Extracted, ids: &[String]) -> Result<Vec<StrokeWindow>> {
    let by_id = data.strokes_by_id();
    let strokes: Vec<_> = ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .with_context(|| format!("stroke `{id}` is not in the extraction outputs; rerun `gesturekit extract`"))
        })
        .collect::<Result<_>>()?;
    let features = data.features(&ctx.layout, strokes.iter().copied())?;
    strokes
        .iter()
        .map(|s| {
            let clip = &data.clips[&s.clip_id];
            window_for_stroke(s, &features[&s.clip_id], clip.duration_s).with_context(|| format!("window for stroke {}", s.stroke_id))
        })
        .collect()
}

pub(crate) fn length_only_window(w: &StrokeWindow) -> Result<StrokeWindow> {
    Ok(StrokeWindow {
        features: length_only_features(&w.stroke_id, w.valid_len, MAX_INPUT_FRAMES)?,
        ..w.clone()
    })
}

pub(crate) fn targets(data: &Extracted, p: Parameter, ids: &[String]) -> Vec<[f64; 2]> {
    let by_id = data.params_by_id();
    ids.iter()
        .map(|id| {
            let g = by_id[id.as_str()];
            [g.get(p, Hand::Left), g.get(p, Hand::Right)]
        })
        .collect()
}

pub(crate) fn corpus_split(ctx: &Context, data: &Extracted) -> Result<Split> {
    let ids: Vec<String> = data.strokes.iter().map(|s| s.stroke_id.clone()).collect();
    let k = &ctx.config.constants;
    Ok(make_split(&ids, ctx.config.seeds.split, k.validation_fraction, k.test_fraction)?)
}

struct Inputs {
    train: Vec<StrokeWindow>,
    validation: Vec<StrokeWindow>,
}

fn fit(
    ctx: &Context,
    p: Parameter,
    opts: &TrainOptions,
    inputs: Inputs,
    targets: (&[[f64; 2]], &[[f64; 2]]),
    feature_set: &str,
    normalize_features: bool,
) -> Result<(Checkpoint, String, f64)> {
    let feature_normalizer = if normalize_features {
        Some(FeatureNormalizer::fit(inputs.train.iter().map(|w| &w.features))?)
    } else {
        None
    };
    let target_normalizer = TargetNormalizer::fit(targets.0)?;
    let to_samples = |windows: Vec<StrokeWindow>, t: &[[f64; 2]]| -> Result<Vec<Sample>> {
        windows
            .into_iter()
            .zip(t)
            .map(|(w, t)| {
                let features = match &feature_normalizer {
                    Some(n) => n.apply(&w.features)?,
                    None => w.features,
                };
                Ok(Sample {
                    stroke_id: w.stroke_id,
                    features,
                    target: target_normalizer.normalize(*t),
                })
            })
            .collect()
    };
    let train_set = to_samples(inputs.train, targets.0)?;
    let validation = to_samples(inputs.validation, targets.1)?;
    let dim = train_set[0].features.dim();
    let mut config = ctx.config.constants.model(p, dim, ctx.config.seeds.model);
    if let Some(e) = opts.epochs {
        config.epochs = e;
    }
    log::info!(
        "{p} ({feature_set}): {} training and {} validation strokes, {} epochs",
        train_set.len(),
        validation.len(),
        config.epochs
    );
    let outcome = train(&config, &train_set, &validation).with_context(|| format!("training the {p} model"))?;
    let mut cp = Checkpoint::from_network(&outcome.network, outcome.best_epoch);
    cp.parameter = Some(p);
    cp.feature_set = feature_set.to_string();
    cp.target_normalizer = Some(target_normalizer);
    cp.feature_normalizer = feature_normalizer;
    let best = outcome.log[outcome.best_epoch].validation_mse;
    Ok((cp, outcome.log_csv(), best))
}

/// Trains the regressor for `p` on the training split and keeps the epoch
/// with the lowest validation error.
pub fn cmd_train(ctx: &Context, p: Parameter, opts: &TrainOptions) -> Result<TrainSummary> {
    let data = Extracted::load(&ctx.layout)?;
    let split = corpus_split(ctx, &data)?;
    let layout = &ctx.layout;
    store::write_json(&layout.split_json(p), &split)?;

    let train_windows = stroke_windows(ctx, &data, &split.train)?;
    let val_windows = stroke_windows(ctx, &data, &split.validation)?;
    let train_t = targets(&data, p, &split.train);
    let val_t = targets(&data, p, &split.validation);

    if opts.length_only {
        let inputs = Inputs {
            train: train_windows.iter().map(length_only_window).collect::<Result<_>>()?,
            validation: val_windows.iter().map(length_only_window).collect::<Result<_>>()?,
        };
        let (cp, log, _) = fit(ctx, p, opts, inputs, (&train_t, &val_t), LENGTH_ONLY, false)?;
        store::write(&layout.length_only_checkpoint(p), cp.to_json())?;
        store::write(&layout.length_only_log(p), log)?;
    }

    let inputs = Inputs {
        train: train_windows,
        validation: val_windows,
    };
    let (cp, log, best_validation_mse) = fit(
        ctx,
        p,
        opts,
        inputs,
        (&train_t, &val_t),
        feature_set_name(ctx.config.feature_set),
        true,
    )?;
    store::write(&layout.checkpoint(p), cp.to_json())?;
    store::write(&layout.train_log(p), log)?;
    log::info!(
        "{p}: best epoch {} (validation MSE {best_validation_mse:.6}), checkpoint {}",
        cp.epoch,
        layout.checkpoint(p).display()
    );
    Ok(TrainSummary {
        checkpoint: layout.checkpoint(p),
        best_epoch: cp.epoch,
        best_validation_mse,
    })
}
