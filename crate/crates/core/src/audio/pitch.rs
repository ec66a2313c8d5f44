//! F0 by normalized autocorrelation, with first and second derivatives.

use super::{samples_for, AudioBuffer, AudioError};
use crate::constants::{F0_MAX_HZ, F0_MIN_HZ, F0_WINDOW_S, HOP_S, VOICING_THRESHOLD};

/// Among local maxima, the smallest lag whose peak is within this fraction of
/// the best peak wins. Keeps period multiples from being picked.
const OCTAVE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchConfig {
    pub window_s: f64,
    pub hop_s: f64,
    pub min_hz: f64,
    pub max_hz: f64,
    pub voicing_threshold: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            window_s: F0_WINDOW_S,
            hop_s: HOP_S,
            min_hz: F0_MIN_HZ,
            max_hz: F0_MAX_HZ,
            voicing_threshold: VOICING_THRESHOLD,
        }
    }
}

/// Per-frame F0 (Hz, 0 when unvoiced) and its derivatives in Hz/s and Hz/s².
/// Frame `t` covers samples `[t * hop, t * hop + window)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack {
    pub f0: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta2: Vec<f64>,
    pub window_len: usize,
    pub hop_len: usize,
}

impl PitchTrack {
    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn voiced(&self, t: usize) -> bool {
        self.f0[t] > 0.0
    }
}

/// Normalized autocorrelation of one mean-removed frame for lags `lo..=hi`.
fn normalized_autocorr(frame: &[f64], lo: usize, hi: usize, out: &mut Vec<f64>) {
    let n = frame.len();
    let mean = frame.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = frame.iter().map(|v| v - mean).collect();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in &x {
        acc += v * v;
        prefix.push(acc);
    }
    out.clear();
    for lag in lo..=hi {
        let head = prefix[n - lag];
        let tail = prefix[n] - prefix[lag];
        let denom = (head * tail).sqrt();
        if denom <= 0.0 || !denom.is_finite() {
            out.push(0.0);
            continue;
        }
        let cross: f64 = x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| a * b).sum();
        out.push(cross / denom);
    }
}

fn frame_f0(frame: &[f64], sr: f64, cfg: &PitchConfig, r: &mut Vec<f64>) -> f64 {
    let min_lag = (sr / cfg.max_hz).ceil() as usize;
    let max_lag = ((sr / cfg.min_hz).floor() as usize).min(frame.len() - 2);
    if min_lag < 2 || max_lag <= min_lag {
        return 0.0;
    }
    // r[i] holds lag (min_lag - 1 + i) so candidates have both neighbours.
    normalized_autocorr(frame, min_lag - 1, max_lag + 1, r);
    let at = |lag: usize| r[lag + 1 - min_lag];
    let peaks: Vec<usize> = (min_lag..=max_lag)
        .filter(|&l| at(l) > at(l - 1) && at(l) >= at(l + 1))
        .collect();
    let Some(best) = peaks.iter().map(|&l| at(l)).reduce(f64::max) else {
        return 0.0;
    };
    if best < cfg.voicing_threshold {
        return 0.0;
    }
    let lag = *peaks
        .iter()
        .find(|&&l| at(l) >= best * (1.0 - OCTAVE_TOLERANCE))
        .expect("best peak qualifies");
    let (a, b, c) = (at(lag - 1), at(lag), at(lag + 1));
    let curvature = a - 2.0 * b + c;
    let shift = if curvature.abs() > 1e-15 {
        (0.5 * (a - c) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    sr / (lag as f64 + shift)
}

/// Central differences scaled to per-second units; one-sided at the ends.
fn derivative(track: &[f64], hop_s: f64) -> Vec<f64> {
    let n = track.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|t| {
            if t == 0 {
                (track[1] - track[0]) / hop_s
            } else if t == n - 1 {
                (track[n - 1] - track[n - 2]) / hop_s
            } else {
                (track[t + 1] - track[t - 1]) / (2.0 * hop_s)
            }
        })
        .collect()
}

/// Pitch track with derivatives. Unvoiced frames are held at the previous
/// voiced value for differencing (leading unvoiced frames take the first
/// voiced value); an all-unvoiced track has zero derivatives.
pub fn f0_with_derivatives(audio: &AudioBuffer, cfg: &PitchConfig) -> Result<PitchTrack, AudioError> {
    let sr = audio.sample_rate() as f64;
    let win = samples_for(cfg.window_s, audio.sample_rate());
    let hop = samples_for(cfg.hop_s, audio.sample_rate());
    let x = audio.samples();
    if x.len() < win {
        return Err(AudioError::TooShort {
            samples: x.len(),
            needed: win,
            window_ms: (cfg.window_s * 1000.0).round() as u32,
        });
    }
    let n_frames = (x.len() - win) / hop + 1;
    let mut r = Vec::new();
    let f0: Vec<f64> = (0..n_frames)
        .map(|t| frame_f0(&x[t * hop..t * hop + win], sr, cfg, &mut r))
        .collect();

    let (delta, delta2) = match f0.iter().position(|&v| v > 0.0) {
        None => (vec![0.0; n_frames], vec![0.0; n_frames]),
        Some(first) => {
            let mut held = Vec::with_capacity(n_frames);
            let mut last = f0[first];
            for &v in &f0 {
                if v > 0.0 {
                    last = v;
                }
                held.push(last);
            }
            let d = derivative(&held, cfg.hop_s);
            let dd = derivative(&d, cfg.hop_s);
            (d, dd)
        }
    };
    Ok(PitchTrack {
        f0,
        delta,
        delta2,
        window_len: win,
        hop_len: hop,
    })
}
