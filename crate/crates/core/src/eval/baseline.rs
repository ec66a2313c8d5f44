use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mean, median, ErrorSummary, EvalError};
use crate::constants::{BASELINE_REPEATS, PATH_LENGTH_STD_DIVISOR};
use crate::hand::{Hand, HandPair};
use crate::params::Parameter;

/// A corpus stroke as seen by the baseline: its dataset, the value of the
/// parameter under evaluation, and its path length, per hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStroke {
    pub stroke_id: String,
    pub dataset_id: String,
    pub value: HandPair<f64>,
    pub path_length: HandPair<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restriction {
    None,
    /// Donor path length within a quarter standard deviation of the target's.
    PathLength,
}

impl Restriction {
    /// Size parameters are drawn unrestricted (restricting them by path
    /// length would leak most of the answer); everything else is drawn from
    /// the path-length band.
    pub fn for_parameter(p: Parameter) -> Self {
        match p {
            Parameter::PathLength | Parameter::MajorAxisLength => Restriction::None,
            _ => Restriction::PathLength,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub restriction: Restriction,
    pub repeats: usize,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn new(restriction: Restriction, seed: u64) -> Self {
        Self {
            restriction,
            repeats: BASELINE_REPEATS,
            seed,
        }
    }
}

/// One donor draw with the values the path-length constraint was checked on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineDraw {
    pub repeat: usize,
    pub hand: Hand,
    pub target: String,
    pub donor: String,
    pub pl_true: f64,
    pub pl_donor: f64,
    pub pl_std: f64,
    pub abs_error: f64,
}

impl BaselineDraw {
    /// Whether this draw satisfies the strict path-length band.
    pub fn within_band(&self) -> bool {
        let half = self.pl_std / PATH_LENGTH_STD_DIVISOR;
        self.pl_true - half < self.pl_donor && self.pl_donor < self.pl_true + half
    }
}

/// Share of same-dataset candidates (target excluded) that are eligible.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EligibleFraction {
    /// Mean over targets of each target's eligible share.
    pub per_target_mean: f64,
    /// Total eligible over total candidates.
    pub aggregate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    /// Repeat-averaged mean and median absolute errors.
    pub summary: HandPair<ErrorSummary>,
    /// Repeat-averaged absolute error per target, aligned with the targets.
    pub per_target: HandPair<Vec<f64>>,
    pub eligible: HandPair<EligibleFraction>,
    pub draws: Vec<BaselineDraw>,
}

/// Population standard deviation of path length per dataset and hand.
pub fn path_length_spread(pool: &[BaselineStroke]) -> BTreeMap<String, HandPair<f64>> {
    let mut by_ds: BTreeMap<String, Vec<&BaselineStroke>> = BTreeMap::new();
    for s in pool {
        by_ds.entry(s.dataset_id.clone()).or_default().push(s);
    }
    by_ds
        .into_iter()
        .map(|(ds, members)| {
            let spread = HandPair::from_fn(|hand| {
                let v: Vec<f64> = members.iter().map(|s| *s.path_length.get(hand)).collect();
                let m = v.iter().sum::<f64>() / v.len() as f64;
                (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
            });
            (ds, spread)
        })
        .collect()
}

/// Indices into `pool` a target may draw from, and the candidate count
/// (same dataset, target excluded) the eligible share is relative to.
pub fn eligible_donors(
    target: &BaselineStroke,
    pool: &[BaselineStroke],
    hand: Hand,
    restriction: Restriction,
    pl_std: f64,
) -> (Vec<usize>, usize) {
    let half = pl_std / PATH_LENGTH_STD_DIVISOR;
    let pl = *target.path_length.get(hand);
    let mut candidates = 0;
    let eligible = pool
        .iter()
        .enumerate()
        .filter(|(_, d)| d.dataset_id == target.dataset_id && d.stroke_id != target.stroke_id)
        .inspect(|_| candidates += 1)
        .filter(|(_, d)| match restriction {
            Restriction::None => true,
            Restriction::PathLength => {
                let p = *d.path_length.get(hand);
                pl - half < p && p < pl + half
            }
        })
        .map(|(i, _)| i)
        .collect();
    (eligible, candidates)
}

/// Errors of predicting each target's value by a uniformly drawn
/// same-dataset donor's value, repeated with per-repeat generator streams.
pub fn random_baseline(
    targets: &[BaselineStroke],
    pool: &[BaselineStroke],
    cfg: &BaselineConfig,
) -> Result<BaselineResult, EvalError> {
    if targets.is_empty() {
        return Err(EvalError::Empty("target set"));
    }
    if cfg.repeats == 0 {
        return Err(EvalError::Empty("repeat count"));
    }
    let spread = path_length_spread(pool);
    let mut eligible_lists: HandPair<Vec<Vec<usize>>> = HandPair::default();
    let mut eligible = HandPair::<EligibleFraction>::default();
    for hand in Hand::BOTH {
        let (mut share_sum, mut total_elig, mut total_cand) = (0.0, 0usize, 0usize);
        for t in targets {
            let std = spread.get(&t.dataset_id).map_or(0.0, |s| *s.get(hand));
            let (list, candidates) = eligible_donors(t, pool, hand, cfg.restriction, std);
            if list.is_empty() {
                return Err(EvalError::NoEligibleDonor {
                    stroke: t.stroke_id.clone(),
                    hand,
                });
            }
            share_sum += list.len() as f64 / candidates as f64;
            total_elig += list.len();
            total_cand += candidates;
            eligible_lists.get_mut(hand).push(list);
        }
        *eligible.get_mut(hand) = EligibleFraction {
            per_target_mean: share_sum / targets.len() as f64,
            aggregate: total_elig as f64 / total_cand as f64,
        };
    }

    let mut draws = Vec::with_capacity(cfg.repeats * targets.len() * 2);
    let mut per_target: HandPair<Vec<f64>> = HandPair::from_fn(|_| vec![0.0; targets.len()]);
    let mut sums: HandPair<ErrorSummary> = HandPair::default();
    for repeat in 0..cfg.repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(repeat as u64);
        let mut errs: HandPair<Vec<f64>> = HandPair::default();
        for (k, t) in targets.iter().enumerate() {
            for hand in Hand::BOTH {
                let list = &eligible_lists.get(hand)[k];
                let donor = &pool[list[rng.gen_range(0..list.len())]];
                let err = (donor.value.get(hand) - t.value.get(hand)).abs();
                errs.get_mut(hand).push(err);
                per_target.get_mut(hand)[k] += err / cfg.repeats as f64;
                draws.push(BaselineDraw {
                    repeat,
                    hand,
                    target: t.stroke_id.clone(),
                    donor: donor.stroke_id.clone(),
                    pl_true: *t.path_length.get(hand),
                    pl_donor: *donor.path_length.get(hand),
                    pl_std: spread.get(&t.dataset_id).map_or(0.0, |s| *s.get(hand)),
                    abs_error: err,
                });
            }
        }
        for hand in Hand::BOTH {
            let s = sums.get_mut(hand);
            s.mean += mean(errs.get(hand))?;
            s.median += median(errs.get(hand))?;
        }
    }
    let r = cfg.repeats as f64;
    let summary = sums.map(|_, s| ErrorSummary {
        mean: s.mean / r,
        median: s.median / r,
    });
    Ok(BaselineResult {
        summary,
        per_target,
        eligible,
        draws,
    })
}
