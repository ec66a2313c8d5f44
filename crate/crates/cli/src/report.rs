use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Result};
use gesturekit::eval::{emit_table, parse_table_csv, reduction, render_text, ErrorReport, TableRow};
use gesturekit::params::Parameter;
use gesturekit::stimuli::Direction;
use gesturekit::Hand;

use crate::store;
use crate::Context;

/// A printed reduction next to the one recomputed from its own row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionCheck {
    pub parameter: Parameter,
    /// `mean` or `median`.
    pub statistic: &'static str,
    pub hand: Hand,
    pub given: i64,
    pub recomputed: i64,
}

impl ReductionCheck {
    pub fn deviation(&self) -> i64 {
        (self.given - self.recomputed).abs()
    }
}

/// Recomputes every reduction cell of `rows` from the error and baseline
/// cells of the same row.
pub fn check_reductions(rows: &[TableRow]) -> Result<Vec<ReductionCheck>> {
    let mut out = Vec::new();
    for r in rows {
        for (statistic, err, base, red) in [
            ("mean", &r.mean, &r.baseline_mean, &r.reduction_mean),
            ("median", &r.median, &r.baseline_median, &r.reduction_median),
        ] {
            for hand in Hand::BOTH {
                out.push(ReductionCheck {
                    parameter: r.parameter,
                    statistic,
                    hand,
                    given: *red.get(hand),
                    recomputed: reduction(*base.get(hand), *err.get(hand))?,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ReportSummary {
    pub text: String,
    pub checks: Vec<ReductionCheck>,
}

/// Renders the table (from a supplied CSV or the evaluation results) and
/// collects training curves and stimulus verification summaries.
pub fn cmd_report(ctx: &Context, table: Option<&Path>) -> Result<ReportSummary> {
    let layout = &ctx.layout;
    let dir = layout.report_dir();
    let rows = match table {
        Some(path) => parse_table_csv(&store::read_text(path)?)?,
        None => {
            let path = layout.evaluate_dir().join("reports.json");
            if !path.is_file() {
                bail!("missing {}; run `gesturekit evaluate` first or pass --table", path.display());
            }
            let reports: Vec<ErrorReport> = store::read_json(&path)?;
            emit_table(&reports, false)?.rows
        }
    };
    let text = render_text(&rows);
    store::write(&dir.join("table.txt"), &text)?;

    let checks = check_reductions(&rows)?;
    let mut check_csv = String::from("parameter,statistic,hand,given,recomputed,deviation\n");
    for c in &checks {
        writeln!(
            check_csv,
            "{},{},{},{},{},{}",
            c.parameter,
            c.statistic,
            c.hand.short(),
            c.given,
            c.recomputed,
            c.deviation()
        )
        .expect("string write");
    }
    store::write(&dir.join("reduction_check.csv"), check_csv)?;
    let off: Vec<&ReductionCheck> = checks.iter().filter(|c| c.deviation() > 1).collect();
    if !off.is_empty() {
        log::warn!("{} reduction cells differ from their recomputation by more than 1 point", off.len());
    }

    let mut curves = String::from("parameter,epoch,train_mse,validation_mse\n");
    for p in Parameter::ALL {
        let log_path = layout.train_log(p);
        if log_path.is_file() {
            for line in store::read_text(&log_path)?.lines().skip(1) {
                writeln!(curves, "{p},{line}").expect("string write");
            }
        }
    }
    store::write(&dir.join("training_curves.csv"), curves)?;

    let mut stimuli = String::from("parameter,direction,target_class,n_total,n_in_band,n_skipped,fraction_in_band\n");
    for p in Parameter::ALL {
        for d in Direction::BOTH {
            let path = layout.stimuli_dir(p, d).join("verification.json");
            if !path.is_file() {
                continue;
            }
            let v: serde_json::Value = store::read_json(&path)?;
            writeln!(
                stimuli,
                "{p},{d},{},{},{},{},{}",
                v["target_class"].as_str().unwrap_or(""),
                v["n_total"],
                v["n_in_band"],
                v["n_skipped"],
                v["fraction_in_band"]
            )
            .expect("string write");
        }
    }
    store::write(&dir.join("stimuli.csv"), stimuli)?;
    let predictions = layout.evaluate_dir().join("predictions.csv");
    if table.is_none() && predictions.is_file() {
        store::write(&dir.join("predictions.csv"), store::read_text(&predictions)?)?;
    }
    eprint!("{text}");
    log::info!("report written to {}", dir.display());
    Ok(ReportSummary { text, checks })
}
