use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::EvalError;
use crate::constants::SIGNIFICANCE_ALPHA;

/// Largest sample size for which [`WilcoxonMethod::Auto`] computes the exact
/// null distribution.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    /// Exact up to [`EXACT_MAX_N`] nonzero differences, normal beyond.
    #[default]
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wilcoxon {
    /// Nonzero differences used.
    pub n: usize,
    /// Sum of ranks of positive differences `a - b`.
    pub w_plus: f64,
    pub w_minus: f64,
    /// Two-sided p value.
    pub p: f64,
    /// +1 when `a` tends to exceed `b`, -1 when below, 0 when balanced.
    pub direction: i8,
    pub exact: bool,
}

/// Average ranks (1-based) of `values`, ties sharing the mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Exact two-sided p from the distribution of the positive-rank sum under
/// random signs. Ranks are doubled so tied half-ranks become integers.
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let all = 2f64.powi(ranks.len() as i32);
    let w2 = (2.0 * w_plus).round() as usize;
    let low = w2.min(total - w2);
    let tail: f64 = counts[..=low].iter().sum();
    (2.0 * tail / all).min(1.0)
}

fn normal_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mu = n * (n + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mu).abs() - 0.5).max(0.0) / var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("valid parameters");
    (2.0 * (1.0 - std_normal.cdf(z))).min(1.0)
}

/// Paired signed-rank test on `a - b`. Zero differences are dropped.
pub fn wilcoxon_paired(a: &[f64], b: &[f64], method: WilcoxonMethod) -> Result<Wilcoxon, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Length(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(EvalError::Empty("paired sample"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(EvalError::AllZeroDifferences);
    }
    let ranks = average_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total: f64 = ranks.iter().sum();
    let w_minus = total - w_plus;
    let exact = match method {
        WilcoxonMethod::Exact => true,
        WilcoxonMethod::Normal => false,
        WilcoxonMethod::Auto => diffs.len() <= EXACT_MAX_N,
    };
    let p = if exact {
        exact_p(&ranks, w_plus)
    } else {
        normal_p(&ranks, w_plus)
    };
    let direction = match w_plus.partial_cmp(&w_minus) {
        Some(std::cmp::Ordering::Greater) => 1,
        Some(std::cmp::Ordering::Less) => -1,
        _ => 0,
    };
    Ok(Wilcoxon {
        n: diffs.len(),
        w_plus,
        w_minus,
        p,
        direction,
        exact,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bonferroni {
    pub p: f64,
    pub threshold: f64,
    pub significant: bool,
}

/// Significant iff `p < alpha / n_tests` (strict).
pub fn bonferroni(p: f64, n_tests: usize) -> Result<Bonferroni, EvalError> {
    if n_tests == 0 {
        return Err(EvalError::NoTests);
    }
    let threshold = SIGNIFICANCE_ALPHA / n_tests as f64;
    Ok(Bonferroni {
        p,
        threshold,
        significant: p < threshold,
    })
}

/// One line of the statistics JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRecord {
    pub test: String,
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    pub p: f64,
    pub threshold: f64,
    pub significant: bool,
    pub direction: i8,
    pub exact: bool,
}

impl StatRecord {
    pub fn new(test: impl Into<String>, w: &Wilcoxon, b: &Bonferroni) -> Self {
        Self {
            test: test.into(),
            n: w.n,
            w_plus: w.w_plus,
            w_minus: w.w_minus,
            p: w.p,
            threshold: b.threshold,
            significant: b.significant,
            direction: w.direction,
            exact: w.exact,
        }
    }
}
