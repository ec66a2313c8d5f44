use std::fmt::Write as _;

use anyhow::{bail, Context as _, Result};
use gesturekit::corpus::{Split, StrokeWindow};
use gesturekit::eval::{
    bonferroni, emit_table, mad, random_baseline, summarize_errors, wilcoxon_paired, EligibleFraction, ErrorReport,
    ErrorSummary, EvalError, StatRecord, WilcoxonMethod,
};
use gesturekit::model::{predict, Checkpoint};
use gesturekit::params::Parameter;
use gesturekit::{Hand, HandPair};
use serde::{Deserialize, Serialize};

use crate::baseline::baseline_strokes;
use crate::store::{self, Extracted};
use crate::train::{length_only_window, stroke_windows, targets};
use crate::Context;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Test,
    Validation,
    Train,
    All,
}

impl Subset {
    fn ids(self, split: &Split) -> Vec<String> {
        match self {
            Subset::Test => split.test.clone(),
            Subset::Validation => split.validation.clone(),
            Subset::Train => split.train.clone(),
            Subset::All => {
                let mut all: Vec<String> = [&split.train, &split.validation, &split.test].into_iter().flatten().cloned().collect();
                all.sort();
                all
            }
        }
    }
}

/// Everything computed for one parameter beyond its table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEvaluation {
    pub parameter: Parameter,
    pub subset: Subset,
    pub n: usize,
    pub baseline_eligible: HandPair<EligibleFraction>,
    pub length_only: Option<HandPair<ErrorSummary>>,
}

#[derive(Debug, Clone)]
pub struct EvaluateSummary {
    pub reports: Vec<ErrorReport>,
    pub statistics: Vec<StatRecord>,
    pub details: Vec<ParameterEvaluation>,
}

fn predictions(cp: &Checkpoint, windows: &[StrokeWindow]) -> Result<Vec<[f64; 2]>> {
    let inputs = match &cp.feature_normalizer {
        Some(n) => windows.iter().map(|w| n.apply(&w.features)).collect::<Result<Vec<_>, _>>()?,
        None => windows.iter().map(|w| w.features.clone()).collect(),
    };
    let refs: Vec<_> = inputs.iter().collect();
    Ok(predict(cp, &refs)?)
}

fn column(v: &[[f64; 2]], hand: Hand) -> Vec<f64> {
    let k = match hand {
        Hand::Left => 0,
        Hand::Right => 1,
    };
    v.iter().map(|x| x[k]).collect()
}

fn signed_rank(name: String, a: &[f64], b: &[f64], n_tests: usize) -> Result<Option<StatRecord>> {
    match wilcoxon_paired(a, b, WilcoxonMethod::Auto) {
        Ok(w) => Ok(Some(StatRecord::new(name, &w, &bonferroni(w.p, n_tests)?))),
        Err(EvalError::AllZeroDifferences) => {
            log::warn!("{name}: all paired differences are zero, test skipped");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

/// Model errors against the restricted random baseline (and the length-only
/// model when one was trained) on a split subset, with signed-rank tests.
pub fn cmd_evaluate(ctx: &Context, param: Option<Parameter>, subset: Subset) -> Result<EvaluateSummary> {
    let layout = &ctx.layout;
    let data = Extracted::load(layout)?;
    let wanted: Vec<Parameter> = match param {
        Some(p) => {
            if !layout.checkpoint(p).is_file() {
                bail!(
                    "missing checkpoint {}; run `gesturekit train --param {p}` first",
                    layout.checkpoint(p).display()
                );
            }
            vec![p]
        }
        None => Parameter::ALL.into_iter().filter(|p| layout.checkpoint(*p).is_file()).collect(),
    };
    if wanted.is_empty() {
        bail!("no checkpoints under {}; run `gesturekit train` first", layout.root.join("train").display());
    }
    let k = &ctx.config.constants;
    let mut reports = Vec::new();
    let mut statistics = Vec::new();
    let mut details = Vec::new();
    let mut pred_csv = String::from("parameter,stroke_id,hand,truth,prediction,length_only\n");
    for p in wanted {
        let cp = Checkpoint::load(&layout.checkpoint(p)).with_context(|| format!("loading {}", layout.checkpoint(p).display()))?;
        let split: Split = store::read_json(&layout.split_json(p))?;
        let ids = subset.ids(&split);
        if ids.is_empty() {
            bail!("the {subset:?} subset of the {p} split is empty");
        }
        let windows = stroke_windows(ctx, &data, &ids)?;
        let pred = predictions(&cp, &windows)?;
        let truth = targets(&data, p, &ids);
        let length_only = if layout.length_only_checkpoint(p).is_file() {
            let lo = Checkpoint::load(&layout.length_only_checkpoint(p))?;
            let lw: Vec<StrokeWindow> = windows.iter().map(length_only_window).collect::<Result<_>>()?;
            Some(predictions(&lo, &lw)?)
        } else {
            None
        };

        let pool = baseline_strokes(&data, p, None);
        let target_strokes = baseline_strokes(&data, p, Some(&ids));
        let base = random_baseline(&target_strokes, &pool, &k.baseline(p, ctx.config.seeds.baseline))
            .with_context(|| format!("{p} random baseline"))?;

        let mut model = HandPair::<ErrorSummary>::default();
        let mut mads = HandPair::default();
        let mut lo_summary = HandPair::<ErrorSummary>::default();
        for hand in Hand::BOTH {
            let (errs, summary) = summarize_errors(&column(&pred, hand), &column(&truth, hand))?;
            *model.get_mut(hand) = summary;
            let all: Vec<f64> = data.params.iter().map(|g| g.get(p, hand)).collect();
            *mads.get_mut(hand) = mad(&all)?;
            statistics.extend(signed_rank(
                format!("{p}_{hand}_model_vs_random"),
                &errs,
                base.per_target.get(hand),
                k.bonferroni_tests,
            )?);
            if let Some(lo) = &length_only {
                let (lo_errs, s) = summarize_errors(&column(lo, hand), &column(&truth, hand))?;
                *lo_summary.get_mut(hand) = s;
                statistics.extend(signed_rank(
                    format!("{p}_{hand}_model_vs_length_only"),
                    &errs,
                    &lo_errs,
                    k.bonferroni_tests,
                )?);
            }
        }
        for (i, id) in ids.iter().enumerate() {
            for (h, hand) in Hand::BOTH.into_iter().enumerate() {
                let lo = length_only.as_ref().map(|v| v[i][h].to_string()).unwrap_or_default();
                writeln!(pred_csv, "{p},{id},{hand},{},{},{lo}", truth[i][h], pred[i][h]).expect("string write");
            }
        }
        reports.push(ErrorReport::new(p, mads, model, base.summary)?);
        details.push(ParameterEvaluation {
            parameter: p,
            subset,
            n: ids.len(),
            baseline_eligible: base.eligible,
            length_only: length_only.map(|_| lo_summary),
        });
    }

    let dir = layout.evaluate_dir();
    let table = emit_table(&reports, false)?;
    store::write_json(&dir.join("reports.json"), &reports)?;
    store::write_json(&dir.join("statistics.json"), &statistics)?;
    store::write_json(&dir.join("details.json"), &details)?;
    store::write(&dir.join("table.csv"), &table.csv)?;
    store::write(&dir.join("table.txt"), &table.text)?;
    store::write(&dir.join("predictions.csv"), pred_csv)?;
    log::info!("evaluation of {} parameters written to {}", reports.len(), dir.display());
    Ok(EvaluateSummary {
        reports,
        statistics,
        details,
    })
}
