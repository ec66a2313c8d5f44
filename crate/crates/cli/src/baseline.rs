use std::collections::BTreeSet;

use anyhow::{Context as _, Result};
use gesturekit::eval::{random_baseline, BaselineResult, BaselineStroke};
use gesturekit::params::Parameter;

use crate::store::{self, Extracted};
use crate::Context;

/// Baseline view of the extracted strokes, optionally limited to `ids`.
pub(crate) fn baseline_strokes(data: &Extracted, p: Parameter, ids: Option<&[String]>) -> Vec<BaselineStroke> {
    let keep: Option<BTreeSet<&str>> = ids.map(|v| v.iter().map(String::as_str).collect());
    let params = data.params_by_id();
    let mut out: Vec<BaselineStroke> = data
        .strokes
        .iter()
        .filter(|s| keep.as_ref().map_or(true, |k| k.contains(s.stroke_id.as_str())))
        .map(|s| {
            let g = params[s.stroke_id.as_str()];
            BaselineStroke {
                stroke_id: s.stroke_id.clone(),
                dataset_id: s.dataset_id.clone(),
                value: g.pair(p),
                path_length: g.pair(Parameter::PathLength),
            }
        })
        .collect();
    if let Some(ids) = ids {
        // Keep the caller's order so results line up with its other lists.
        let pos: std::collections::BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        out.sort_by_key(|b| pos[b.stroke_id.as_str()]);
    }
    out
}

/// Random-sampling baseline with every corpus stroke as a target.
pub fn cmd_baseline(ctx: &Context, param: Option<Parameter>) -> Result<Vec<(Parameter, BaselineResult)>> {
    let data = Extracted::load(&ctx.layout)?;
    let params = param.map_or(Parameter::ALL.to_vec(), |p| vec![p]);
    let mut out = Vec::new();
    for p in params {
        let pool = baseline_strokes(&data, p, None);
        let cfg = ctx.config.constants.baseline(p, ctx.config.seeds.baseline);
        let result = random_baseline(&pool, &pool, &cfg).with_context(|| format!("{p} random baseline"))?;
        let dir = ctx.layout.baseline_dir();
        store::write_json(
            &dir.join(format!("{}.json", p.name())),
            &serde_json::json!({
                "parameter": p,
                "config": cfg,
                "summary": result.summary,
                "eligible": result.eligible,
            }),
        )?;
        let mut draws = String::from("repeat,hand,target,donor,pl_true,pl_donor,pl_std,abs_error,within_band\n");
        for d in &result.draws {
            draws.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                d.repeat,
                d.hand,
                d.target,
                d.donor,
                d.pl_true,
                d.pl_donor,
                d.pl_std,
                d.abs_error,
                d.within_band()
            ));
        }
        store::write(&dir.join(format!("{}_draws.csv", p.name())), draws)?;
        log::info!(
            "{p}: baseline mean error {:.4}/{:.4} ({:?} restriction)",
            result.summary.left.mean,
            result.summary.right.mean,
            cfg.restriction
        );
        out.push((p, result));
    }
    Ok(out)
}
