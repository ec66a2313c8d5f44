use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Direction, ExpressionClass, StimulusError};
use crate::constants::{HIGH_PERCENTILE, LOW_PERCENTILE};
use crate::hand::{Hand, HandPair};
use crate::params::{GestureParams, Parameter};

/// Default position of an edit target between the band edge (0) and the
/// observed extreme (1).
pub const DEFAULT_TARGET_FRACTION: f64 = 0.5;

/// Nearest-rank percentile of ascending `sorted`: element `ceil(q n) - 1`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Corpus distribution summary for one parameter and hand, kept on the
/// expression scale `sign * value` so that "high" always means more
/// expressive. `sign` is -1 only for the right arm's swivel, where moving
/// the elbow out gives more negative angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub p25: f64,
    pub p75: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
    #[serde(default = "unit_sign")]
    pub sign: f64,
}

fn unit_sign() -> f64 {
    1.0
}

/// -1 where a larger magnitude is a more negative value.
pub fn expression_sign(parameter: Parameter, hand: Hand) -> f64 {
    if parameter == Parameter::ArmSwivel && hand == Hand::Right {
        -1.0
    } else {
        1.0
    }
}

impl Band {
    pub fn from_values(values: &[f64]) -> Result<Self, StimulusError> {
        Self::oriented(values, 1.0)
    }

    /// Band over `sign * value`.
    pub fn oriented(values: &[f64], sign: f64) -> Result<Self, StimulusError> {
        if values.len() < 4 {
            return Err(StimulusError::TooFewSamples(values.len()));
        }
        let mut v: Vec<f64> = values.iter().map(|x| sign * x).collect();
        v.sort_by(f64::total_cmp);
        Ok(Self {
            p25: nearest_rank(&v, LOW_PERCENTILE),
            p75: nearest_rank(&v, HIGH_PERCENTILE),
            min: v[0],
            max: v[v.len() - 1],
            n: v.len(),
            sign,
        })
    }

    /// Expression-scale value of a raw parameter value.
    pub fn expression(&self, value: f64) -> f64 {
        self.sign * value
    }

    pub fn classify(&self, value: f64) -> ExpressionClass {
        classify(value, self)
    }

    /// Raw value `fraction` of the way from the band edge to the observed
    /// extreme on the side `direction` edits towards.
    pub fn target(&self, direction: Direction, fraction: f64) -> Option<f64> {
        let e = match direction {
            Direction::Increase if self.max > self.p75 => self.p75 + fraction * (self.max - self.p75),
            Direction::Decrease if self.min < self.p25 => self.p25 - fraction * (self.p25 - self.min),
            _ => return None,
        };
        Some(self.sign * e)
    }

    /// How far raw `value` is from the interval of `class` on the expression
    /// scale (0 inside it, and 0 on the closed edge of the extreme classes).
    pub fn residual(&self, class: ExpressionClass, value: f64) -> f64 {
        let e = self.expression(value);
        match class {
            ExpressionClass::Low => (e - self.p25).max(0.0),
            ExpressionClass::High => (self.p75 - e).max(0.0),
            ExpressionClass::Medium => (self.p25 - e).max(e - self.p75).max(0.0),
        }
    }

    pub fn within_limits(&self, value: f64) -> bool {
        let e = self.expression(value);
        self.min <= e && e <= self.max
    }

    /// Observed range of raw values, ascending.
    pub fn raw_range(&self) -> (f64, f64) {
        let (a, b) = (self.sign * self.min, self.sign * self.max);
        (a.min(b), a.max(b))
    }
}

/// Low iff below the 25th percentile, high iff above the 75th, on the
/// expression scale.
pub fn classify(value: f64, band: &Band) -> ExpressionClass {
    let e = band.expression(value);
    if e < band.p25 {
        ExpressionClass::Low
    } else if e > band.p75 {
        ExpressionClass::High
    } else {
        ExpressionClass::Medium
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileBands(pub BTreeMap<Parameter, HandPair<Band>>);

impl PercentileBands {
    pub fn get(&self, parameter: Parameter, hand: Hand) -> &Band {
        self.0[&parameter].get(hand)
    }

    pub fn pair(&self, parameter: Parameter) -> &HandPair<Band> {
        &self.0[&parameter]
    }
}

/// Bands for every parameter and hand over the given strokes.
pub fn compute_bands(params: &[GestureParams]) -> Result<PercentileBands, StimulusError> {
    let mut map = BTreeMap::new();
    for p in Parameter::ALL {
        let pair = HandPair::try_from_fn(|hand| {
            let values: Vec<f64> = params.iter().map(|g| g.get(p, hand)).collect();
            Band::oriented(&values, expression_sign(p, hand))
        })?;
        map.insert(p, pair);
    }
    Ok(PercentileBands(map))
}
