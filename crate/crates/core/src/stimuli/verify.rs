use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::plan::{EditedSequence, StimulusPlan};
use super::{Direction, ExpressionClass, StimulusError};
use crate::hand::Hand;
use crate::params::{extract_all, MajorAxisMode, Parameter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationItem {
    pub stroke_id: String,
    pub window_index: usize,
    pub hand: Hand,
    pub original: f64,
    pub target: f64,
    /// NaN when the stroke could not be edited.
    pub achieved: f64,
    pub achieved_class: Option<ExpressionClass>,
    pub in_band: bool,
    /// Distance from the target band (0 when inside).
    pub residual: f64,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub parameter: Parameter,
    pub direction: Direction,
    pub target_class: ExpressionClass,
    pub n_total: usize,
    pub n_in_band: usize,
    pub n_skipped: usize,
    pub items: Vec<VerificationItem>,
}

impl VerificationReport {
    pub fn fraction_in_band(&self) -> f64 {
        if self.n_total == 0 {
            0.0
        } else {
            self.n_in_band as f64 / self.n_total as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "stroke_id",
            "window",
            "hand",
            "original",
            "target",
            "achieved",
            "achieved_class",
            "in_band",
            "residual",
            "skipped",
        ])
        .expect("in-memory write");
        for it in &self.items {
            w.write_record([
                it.stroke_id.clone(),
                it.window_index.to_string(),
                it.hand.to_string(),
                it.original.to_string(),
                it.target.to_string(),
                it.achieved.to_string(),
                it.achieved_class.map(|c| c.to_string()).unwrap_or_default(),
                it.in_band.to_string(),
                it.residual.to_string(),
                it.skipped.clone().unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("csv is utf-8")
    }
}

/// Re-extracts every planned stroke from the edited sequences and checks
/// that it landed in the target class. Skipped strokes count as misses.
pub fn verify_plan(plan: &StimulusPlan, sequences: &[EditedSequence]) -> Result<VerificationReport, StimulusError> {
    let mut edited = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    for seq in sequences {
        for r in &seq.results {
            edited.insert(r.stroke_id.as_str(), (seq, r));
        }
        for s in &seq.skipped {
            skipped.insert(s.stroke_id.as_str(), s.reason.clone());
        }
    }
    let mut items = Vec::new();
    for t in &plan.targets {
        let fresh = match edited.get(t.stroke_id.as_str()) {
            Some((seq, r)) => Some(extract_all(&r.stroke, seq.trajectory(), MajorAxisMode::FarthestPair)?),
            None => None,
        };
        for hand in Hand::BOTH {
            let band = plan.band.get(hand);
            let (achieved, achieved_class) = match &fresh {
                Some(p) => {
                    let v = p.get(plan.parameter, hand);
                    (v, Some(band.classify(v)))
                }
                None => (f64::NAN, None),
            };
            let reason = if fresh.is_none() {
                Some(
                    skipped
                        .get(t.stroke_id.as_str())
                        .cloned()
                        .unwrap_or_else(|| "not executed".to_string()),
                )
            } else {
                None
            };
            items.push(VerificationItem {
                stroke_id: t.stroke_id.clone(),
                window_index: t.window_index,
                hand,
                original: *t.original.get(hand),
                target: *t.target.get(hand),
                achieved,
                achieved_class,
                in_band: achieved_class == Some(plan.target_class),
                residual: if achieved.is_nan() {
                    f64::NAN
                } else {
                    band.residual(plan.target_class, achieved)
                },
                skipped: reason,
            });
        }
    }
    Ok(VerificationReport {
        parameter: plan.parameter,
        direction: plan.direction,
        target_class: plan.target_class,
        n_total: items.len(),
        n_in_band: items.iter().filter(|i| i.in_band).count(),
        n_skipped: items.iter().filter(|i| i.skipped.is_some()).count(),
        items,
    })
}
