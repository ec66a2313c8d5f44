//! Error summaries, corpus-drawn random baselines, reductions, signed-rank
//! tests and report tables.

mod baseline;
mod table;
mod wilcoxon;

use serde::{Deserialize, Serialize};

pub use baseline::{
    eligible_donors, path_length_spread, random_baseline, BaselineConfig, BaselineDraw, BaselineResult,
    BaselineStroke, EligibleFraction, Restriction,
};
pub use table::{emit_table, parse_table_csv, render_text, ErrorReport, RenderedTable, TableRow, TABLE_CSV_HEADER};
pub use wilcoxon::{bonferroni, wilcoxon_paired, Bonferroni, StatRecord, Wilcoxon, WilcoxonMethod, EXACT_MAX_N};

use crate::hand::Hand;
use crate::params::Parameter;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("length mismatch: {0} predictions, {1} truths")]
    Length(usize, usize),
    #[error("baseline error is zero, reduction undefined")]
    ZeroBaseline,
    #[error("no eligible donor for stroke `{stroke}` ({hand} hand)")]
    NoEligibleDonor { stroke: String, hand: Hand },
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("at least one test is required for the Bonferroni correction")]
    NoTests,
    #[error("report table is missing the {0} row")]
    MissingRow(Parameter),
    #[error("report table: {0}")]
    Table(String),
}

/// Mean and median absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mean: f64,
    pub median: f64,
}

pub fn mean(values: &[f64]) -> Result<f64, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty("value set"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Middle value; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Result<f64, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty("value set"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn summarize(abs_errors: &[f64]) -> Result<ErrorSummary, EvalError> {
    Ok(ErrorSummary {
        mean: mean(abs_errors)?,
        median: median(abs_errors)?,
    })
}

/// Absolute errors of aligned predictions, and their mean and median.
pub fn summarize_errors(predictions: &[f64], truths: &[f64]) -> Result<(Vec<f64>, ErrorSummary), EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::Length(predictions.len(), truths.len()));
    }
    let errs: Vec<f64> = predictions.iter().zip(truths).map(|(p, t)| (p - t).abs()).collect();
    let summary = summarize(&errs)?;
    Ok((errs, summary))
}

/// Mean absolute deviation about the mean.
pub fn mad(values: &[f64]) -> Result<f64, EvalError> {
    let m = mean(values)?;
    Ok(values.iter().map(|v| (v - m).abs()).sum::<f64>() / values.len() as f64)
}

/// `round(100 * (baseline - model) / baseline)`.
pub fn reduction(baseline: f64, model: f64) -> Result<i64, EvalError> {
    if baseline == 0.0 {
        return Err(EvalError::ZeroBaseline);
    }
    Ok((100.0 * (baseline - model) / baseline).round() as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_predictions() {
        let (_, s) = summarize_errors(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(s, ErrorSummary { mean: 0.0, median: 0.0 });
    }

    #[test]
    fn small_error_set() {
        let (_, s) = summarize_errors(&[0.1, 0.3, 0.2], &[0.0; 3]).unwrap();
        assert!((s.mean - 0.2).abs() < 1e-15);
        assert_eq!(s.median, 0.2);
        assert_eq!(summarize_errors(&[], &[]).unwrap_err(), EvalError::Empty("value set"));
    }

    #[test]
    fn mad_examples() {
        assert_eq!(mad(&[3.0; 5]).unwrap(), 0.0);
        assert_eq!(mad(&[0.0, 1.0]).unwrap(), 0.5);
    }

    #[test]
    fn reduction_examples() {
        assert_eq!(reduction(0.28, 0.11).unwrap(), 61);
        assert_eq!(reduction(0.38, 0.31).unwrap(), 18);
        assert_eq!(reduction(0.5, 0.5).unwrap(), 0);
        assert_eq!(reduction(0.0, 0.1).unwrap_err(), EvalError::ZeroBaseline);
    }

    proptest! {
        #[test]
        fn median_matches_sorted_oracle(v in prop::collection::vec(-10.0..10.0f64, 1..40)) {
            let mut s = v.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = s.len();
            let want = if n % 2 == 1 { s[(n - 1) / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 };
            prop_assert_eq!(median(&v).unwrap(), want);
        }

        #[test]
        fn reduction_sign(b in 0.01..10.0f64, m in 0.0..10.0f64) {
            let r = reduction(b, m).unwrap();
            if m < b { prop_assert!(r >= 0); } else { prop_assert!(r <= 0); }
        }
    }
}
