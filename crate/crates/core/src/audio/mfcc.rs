//! Mel-frequency cepstral coefficients.
//!
//! Per frame: periodic Hann window, magnitude spectrum (FFT length = window
//! length rounded up to a power of two), triangular mel filterbank spanning
//! 0 Hz to Nyquist on the HTK mel scale, natural log with a floor, and an
//! orthonormal DCT-II of which coefficients 1..=n_coeffs are kept.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{samples_for, AudioBuffer, AudioError};
use crate::constants::{HOP_S, LOG_FLOOR, MFCC_WINDOW_S, N_MELS, N_MFCC};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfccConfig {
    pub n_coeffs: usize,
    pub window_s: f64,
    pub hop_s: f64,
    pub n_mels: usize,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_coeffs: N_MFCC,
            window_s: MFCC_WINDOW_S,
            hop_s: HOP_S,
            n_mels: N_MELS,
            log_floor: LOG_FLOOR,
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Reusable MFCC extractor for one sample rate.
pub struct Mfcc {
    config: MfccConfig,
    sample_rate: u32,
    win: usize,
    hop: usize,
    n_fft: usize,
    window: Vec<f64>,
    /// `n_mels` rows of `n_fft / 2 + 1` weights.
    filters: Vec<Vec<f64>>,
    /// `n_coeffs` rows of `n_mels` DCT weights (coefficients 1..=n_coeffs).
    dct: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl Mfcc {
    pub fn new(config: MfccConfig, sample_rate: u32) -> Self {
        let win = samples_for(config.window_s, sample_rate);
        let hop = samples_for(config.hop_s, sample_rate);
        let n_fft = win.next_power_of_two();
        let window = (0..win)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / win as f64).cos())
            .collect();
        let n_bins = n_fft / 2 + 1;
        let nyquist = sample_rate as f64 / 2.0;
        let mel_max = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..config.n_mels + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (config.n_mels + 1) as f64))
            .collect();
        let filters = (0..config.n_mels)
            .map(|m| {
                let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * sample_rate as f64 / n_fft as f64;
                        if f > lo && f <= center {
                            (f - lo) / (center - lo)
                        } else if f > center && f < hi {
                            (hi - f) / (hi - center)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let m = config.n_mels as f64;
        let dct = (1..=config.n_coeffs)
            .map(|n| {
                (0..config.n_mels)
                    .map(|j| (2.0 / m).sqrt() * (PI * n as f64 * (j as f64 + 0.5) / m).cos())
                    .collect()
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Self {
            config,
            sample_rate,
            win,
            hop,
            n_fft,
            window,
            filters,
            dct,
            fft,
        }
    }

    pub fn window_len(&self) -> usize {
        self.win
    }

    pub fn hop_len(&self) -> usize {
        self.hop
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// `floor((N - win) / hop) + 1`.
    pub fn frame_count(&self, n_samples: usize) -> usize {
        if n_samples < self.win {
            0
        } else {
            (n_samples - self.win) / self.hop + 1
        }
    }

    /// Coefficient rows, one per frame.
    pub fn compute(&self, audio: &AudioBuffer) -> Result<Vec<Vec<f64>>, AudioError> {
        let x = audio.samples();
        if x.len() < self.win {
            return Err(AudioError::TooShort {
                samples: x.len(),
                needed: self.win,
                window_ms: (self.config.window_s * 1000.0).round() as u32,
            });
        }
        let n_frames = self.frame_count(x.len());
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut log_mel = vec![0.0; self.config.n_mels];
        let mut out = Vec::with_capacity(n_frames);
        for t in 0..n_frames {
            let start = t * self.hop;
            for (i, c) in buf.iter_mut().enumerate() {
                let v = if i < self.win { x[start + i] * self.window[i] } else { 0.0 };
                *c = Complex::new(v, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (m, filter) in self.filters.iter().enumerate() {
                let e: f64 = filter.iter().zip(&buf).map(|(w, c)| w * c.norm()).sum();
                log_mel[m] = e.max(self.config.log_floor).ln();
            }
            out.push(
                self.dct
                    .iter()
                    .map(|row| row.iter().zip(&log_mel).map(|(w, v)| w * v).sum())
                    .collect(),
            );
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, seconds: f64, sr: u32) -> AudioBuffer {
        let n = (seconds * sr as f64) as usize;
        let samples = (0..n)
            .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / sr as f64).sin())
            .collect();
        AudioBuffer::new("tone", samples, sr).unwrap()
    }

    /// Straight-line reference: O(N^2) DFT, explicit triangles, explicit DCT.
    fn oracle_frame(frame: &[f64], sr: f64, n_fft: usize) -> Vec<f64> {
        let win = frame.len();
        let mut mags = Vec::new();
        for k in 0..=n_fft / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &s) in frame.iter().enumerate() {
                let w = 0.5 * (1.0 - (2.0 * PI * n as f64 / win as f64).cos());
                let ang = -2.0 * PI * (k * n) as f64 / n_fft as f64;
                re += s * w * ang.cos();
                im += s * w * ang.sin();
            }
            mags.push((re * re + im * im).sqrt());
        }
        let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
        let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
        let top = mel(sr / 2.0);
        let mut logs = Vec::new();
        for m in 0..26 {
            let lo = inv(top * m as f64 / 27.0);
            let c = inv(top * (m + 1) as f64 / 27.0);
            let hi = inv(top * (m + 2) as f64 / 27.0);
            let mut e = 0.0;
            for (k, mag) in mags.iter().enumerate() {
                let f = k as f64 * sr / n_fft as f64;
                let w = if f > lo && f <= c {
                    (f - lo) / (c - lo)
                } else if f > c && f < hi {
                    (hi - f) / (hi - c)
                } else {
                    0.0
                };
                e += w * mag;
            }
            logs.push(f64::max(e, 1e-10).ln());
        }
        (1..=12)
            .map(|n| {
                logs.iter()
                    .enumerate()
                    .map(|(j, v)| v * (2.0f64 / 26.0).sqrt() * (PI * n as f64 * (j as f64 + 0.5) / 26.0).cos())
                    .sum()
            })
            .collect()
    }

    #[test]
    fn one_second_frame_count() {
        let audio = tone(1000.0, 1.0, 16000);
        let mfcc = Mfcc::new(MfccConfig::default(), 16000);
        assert_eq!(mfcc.compute(&audio).unwrap().len(), 98);
    }

    #[test]
    fn silence_hits_the_floor_everywhere() {
        let audio = AudioBuffer::new("z", vec![0.0; 8000], 16000).unwrap();
        let rows = Mfcc::new(MfccConfig::default(), 16000).compute(&audio).unwrap();
        assert!(rows.windows(2).all(|w| w[0] == w[1]));
        assert!(rows[0].iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn tone_matches_naive_dft_oracle() {
        let audio = tone(1000.0, 0.2, 16000);
        let mfcc = Mfcc::new(MfccConfig::default(), 16000);
        let rows = mfcc.compute(&audio).unwrap();
        for t in [0usize, 7, rows.len() - 1] {
            let start = t * 160;
            let expected = oracle_frame(&audio.samples()[start..start + 400], 16000.0, 512);
            for (a, b) in rows[t].iter().zip(&expected) {
                assert!((a - b).abs() < 1e-6, "frame {t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn other_sample_rates() {
        let mfcc = Mfcc::new(MfccConfig::default(), 44100);
        assert_eq!(mfcc.window_len(), 1103);
        assert_eq!(mfcc.hop_len(), 441);
        assert_eq!(mfcc.n_fft(), 2048);
    }
}
