//! Frame-level feature matrices, normalization and the on-disk feature cache.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::mfcc::{Mfcc, MfccConfig};
use super::pitch::{f0_with_derivatives, PitchConfig};
use super::{samples_for, AudioBuffer, AudioError};
use crate::constants::{HOP_S, LOG_FLOOR, MFCC_WINDOW_S};

/// Column order of the built-in feature set.
pub const BUILTIN_FEATURE_NAMES: [&str; 16] = [
    "mfcc_1", "mfcc_2", "mfcc_3", "mfcc_4", "mfcc_5", "mfcc_6", "mfcc_7", "mfcc_8", "mfcc_9",
    "mfcc_10", "mfcc_11", "mfcc_12", "f0", "f0_delta", "f0_delta2", "log_energy",
];

const CACHE_MAGIC: &str = "# gesturekit-features v1";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("unknown feature set `{0}` (expected mfcc_pitch_energy or external_precomputed)")]
    UnknownFeatureSet(String),
    #[error("external feature file for `{clip}` has {found} rows, audio has {expected} frames")]
    FrameCountMismatch {
        clip: String,
        expected: usize,
        found: usize,
    },
    #[error("external_precomputed feature set selected but no feature file supplied for `{0}`")]
    MissingExternal(String),
    #[error("feature file: {0}")]
    Format(String),
    #[error("valid_len {valid_len} outside 1..={total}")]
    ValidLen { valid_len: usize, total: usize },
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// 12 MFCCs, F0 with two derivatives, log energy (D = 16).
    MfccPitchEnergy,
    /// Per-clip CSV supplied from elsewhere (e.g. GeMAPS).
    ExternalPrecomputed,
}

impl FromStr for FeatureSet {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mfcc_pitch_energy" => Ok(FeatureSet::MfccPitchEnergy),
            "external_precomputed" => Ok(FeatureSet::ExternalPrecomputed),
            other => Err(FeatureError::UnknownFeatureSet(other.to_string())),
        }
    }
}

/// T x D features at a fixed hop. Rows at or past `valid_len` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub clip_id: String,
    pub hop: f64,
    names: Vec<String>,
    n_rows: usize,
    data: Vec<f64>,
    valid_len: usize,
}

impl FeatureMatrix {
    /// Unpadded matrix from rows.
    pub fn from_rows(
        clip_id: impl Into<String>,
        names: Vec<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self, FeatureError> {
        let dim = names.len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(FeatureError::Dimension {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            clip_id: clip_id.into(),
            hop: HOP_S,
            names,
            n_rows: rows.len(),
            data,
            valid_len: rows.len(),
        })
    }

    /// Builds a matrix of `total` rows from `valid` computed rows followed by zeros.
    pub fn padded(
        clip_id: impl Into<String>,
        names: Vec<String>,
        valid: &[f64],
        total: usize,
    ) -> Result<Self, FeatureError> {
        let dim = names.len();
        if dim == 0 || valid.len() % dim != 0 {
            return Err(FeatureError::Dimension {
                expected: dim,
                found: valid.len(),
            });
        }
        let valid_len = valid.len() / dim;
        if valid_len > total {
            return Err(FeatureError::ValidLen { valid_len, total });
        }
        let mut data = valid.to_vec();
        data.resize(total * dim, 0.0);
        Ok(Self {
            clip_id: clip_id.into(),
            hop: HOP_S,
            names,
            n_rows: total,
            data,
            valid_len,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn valid_len(&self) -> usize {
        self.valid_len
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let d = self.dim();
        &self.data[t * d..(t + 1) * d]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Computed rows only.
    pub fn valid_data(&self) -> &[f64] {
        &self.data[..self.valid_len * self.dim()]
    }

    /// Rows `start..start+len` of the computed region, tail-padded to `total`.
    pub fn slice_padded(&self, start: usize, len: usize, total: usize) -> Result<Self, FeatureError> {
        let d = self.dim();
        let end = (start + len).min(self.valid_len);
        let start = start.min(end);
        Self::padded(
            self.clip_id.clone(),
            self.names.clone(),
            &self.data[start * d..end * d],
            total,
        )
    }
}

/// Per-clip features supplied as CSV: a header of names, then one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalFeatures {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ExternalFeatures {
    pub fn parse_csv(text: &str) -> Result<Self, FeatureError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let names: Vec<String> = reader
            .headers()
            .map_err(|e| FeatureError::Format(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| FeatureError::Format(e.to_string()))?;
            let row = record
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| FeatureError::Format(format!("row {}: invalid value `{v}`", i + 1)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != names.len() {
                return Err(FeatureError::Dimension {
                    expected: names.len(),
                    found: row.len(),
                });
            }
            rows.push(row);
        }
        Ok(Self { names, rows })
    }
}

/// Number of 25 ms frames at the 10 ms hop.
pub fn frame_count(audio: &AudioBuffer) -> usize {
    Mfcc::new(MfccConfig::default(), audio.sample_rate()).frame_count(audio.samples().len())
}

/// Log of the frame energy over the 25 ms analysis window.
pub fn log_energy(audio: &AudioBuffer) -> Vec<f64> {
    log_energy_floored(audio, LOG_FLOOR)
}

fn log_energy_floored(audio: &AudioBuffer, floor: f64) -> Vec<f64> {
    let win = samples_for(MFCC_WINDOW_S, audio.sample_rate());
    let hop = samples_for(HOP_S, audio.sample_rate());
    let x = audio.samples();
    let n = frame_count(audio);
    (0..n)
        .map(|t| {
            let e: f64 = x[t * hop..t * hop + win].iter().map(|v| v * v).sum();
            e.max(floor).ln()
        })
        .collect()
}

/// Full-clip feature matrix for the chosen set.
///
/// Pitch frames use a longer window than the MFCC frames; each MFCC frame
/// takes the pitch frame whose center is nearest to its own.
pub fn assemble_features(
    audio: &AudioBuffer,
    set: FeatureSet,
    external: Option<&ExternalFeatures>,
) -> Result<FeatureMatrix, FeatureError> {
    assemble_features_with(audio, set, external, &MfccConfig::default(), &PitchConfig::default())
}

/// [`assemble_features`] with explicit analysis settings. Only the log
/// floor and the voicing threshold may differ from the defaults; frame
/// geometry is fixed by the 10 ms hop.
pub fn assemble_features_with(
    audio: &AudioBuffer,
    set: FeatureSet,
    external: Option<&ExternalFeatures>,
    mfcc_cfg: &MfccConfig,
    pitch_cfg: &PitchConfig,
) -> Result<FeatureMatrix, FeatureError> {
    let expected = frame_count(audio);
    match set {
        FeatureSet::ExternalPrecomputed => {
            let ext = external.ok_or_else(|| FeatureError::MissingExternal(audio.clip_id().to_string()))?;
            if ext.rows.len() != expected {
                return Err(FeatureError::FrameCountMismatch {
                    clip: audio.clip_id().to_string(),
                    expected,
                    found: ext.rows.len(),
                });
            }
            FeatureMatrix::from_rows(audio.clip_id(), ext.names.clone(), &ext.rows)
        }
        FeatureSet::MfccPitchEnergy => {
            let mfcc = Mfcc::new(*mfcc_cfg, audio.sample_rate());
            let coeffs = mfcc.compute(audio)?;
            let pitch = f0_with_derivatives(audio, pitch_cfg)?;
            let energy = log_energy_floored(audio, mfcc_cfg.log_floor);
            let offset = (mfcc.window_len() as f64 - pitch.window_len as f64) / (2.0 * pitch.hop_len as f64);
            let rows: Vec<Vec<f64>> = coeffs
                .into_iter()
                .enumerate()
                .map(|(t, mut row)| {
                    let k = ((t as f64 + offset).round().max(0.0) as usize).min(pitch.len() - 1);
                    row.extend_from_slice(&[pitch.f0[k], pitch.delta[k], pitch.delta2[k], energy[t]]);
                    row
                })
                .collect();
            let names = BUILTIN_FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
            FeatureMatrix::from_rows(audio.clip_id(), names, &rows)
        }
    }
}

/// Input for the speech-length-only comparison: one feature, 1 before the
/// padding and 0 after.
pub fn length_only_features(
    clip_id: &str,
    valid_len: usize,
    total_len: usize,
) -> Result<FeatureMatrix, FeatureError> {
    if valid_len == 0 || valid_len > total_len {
        return Err(FeatureError::ValidLen {
            valid_len,
            total: total_len,
        });
    }
    FeatureMatrix::padded(clip_id, vec!["speech_present".into()], &vec![1.0; valid_len], total_len)
}

/// Per-dimension z-normalization fit on the computed rows of a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormalizer {
    pub fn fit<'a>(matrices: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<Self, FeatureError> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        let mut dim = None;
        let mut seen = Vec::new();
        for m in matrices {
            match dim {
                None => {
                    dim = Some(m.dim());
                    sum = vec![0.0; m.dim()];
                    sq = vec![0.0; m.dim()];
                }
                Some(d) if d != m.dim() => {
                    return Err(FeatureError::Dimension {
                        expected: d,
                        found: m.dim(),
                    })
                }
                _ => {}
            }
            for t in 0..m.valid_len() {
                for (j, v) in m.row(t).iter().enumerate() {
                    sum[j] += v;
                }
            }
            count += m.valid_len();
            seen.push(m);
        }
        if count == 0 {
            return Err(FeatureError::Format("no frames to fit normalization on".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        for m in seen {
            for t in 0..m.valid_len() {
                for (j, v) in m.row(t).iter().enumerate() {
                    let d = v - mean[j];
                    sq[j] += d * d;
                }
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    /// Normalizes the computed rows; padding stays exactly zero.
    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix, FeatureError> {
        if m.dim() != self.mean.len() {
            return Err(FeatureError::Dimension {
                expected: self.mean.len(),
                found: m.dim(),
            });
        }
        let d = m.dim();
        let mut out = m.clone();
        for t in 0..m.valid_len() {
            for j in 0..d {
                let v = &mut out.data[t * d + j];
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        Ok(out)
    }
}

/// Cache text: a magic line recording clip and valid length, a header of
/// feature names, then the computed rows.
pub fn write_feature_cache(m: &FeatureMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{CACHE_MAGIC} clip_id={} valid_len={} hop={}",
        m.clip_id, m.valid_len, m.hop
    );
    out.push_str(&m.names.join(","));
    out.push('\n');
    for t in 0..m.valid_len {
        let row: Vec<String> = m.row(t).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn read_feature_cache(text: &str) -> Result<FeatureMatrix, FeatureError> {
    let mut lines = text.lines();
    let magic = lines
        .next()
        .ok_or_else(|| FeatureError::Format("empty feature cache".into()))?;
    let rest = magic
        .strip_prefix(CACHE_MAGIC)
        .ok_or_else(|| FeatureError::Format("missing feature cache header".into()))?;
    let mut clip_id = None;
    let mut valid_len = None;
    for kv in rest.split_whitespace() {
        match kv.split_once('=') {
            Some(("clip_id", v)) => clip_id = Some(v.to_string()),
            Some(("valid_len", v)) => valid_len = v.parse::<usize>().ok(),
            _ => {}
        }
    }
    let clip_id = clip_id.ok_or_else(|| FeatureError::Format("cache header lacks clip_id".into()))?;
    let valid_len = valid_len.ok_or_else(|| FeatureError::Format("cache header lacks valid_len".into()))?;
    let body: String = lines.collect::<Vec<_>>().join("\n");
    let ext = ExternalFeatures::parse_csv(&body)?;
    if ext.rows.len() != valid_len {
        return Err(FeatureError::Format(format!(
            "cache declares valid_len={valid_len} but holds {} rows",
            ext.rows.len()
        )));
    }
    FeatureMatrix::from_rows(clip_id, ext.names, &ext.rows)
}
