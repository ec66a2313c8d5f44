//! Speech audio: WAV decoding and frame-level features at a 10 ms hop.

mod features;
mod mfcc;
mod pitch;
mod wav;

pub use features::{
    assemble_features, assemble_features_with, frame_count, length_only_features, log_energy, read_feature_cache,
    write_feature_cache, ExternalFeatures, FeatureError, FeatureMatrix, FeatureNormalizer,
    FeatureSet, BUILTIN_FEATURE_NAMES,
};
pub use mfcc::{mel_to_hz, hz_to_mel, Mfcc, MfccConfig};
pub use pitch::{f0_with_derivatives, PitchConfig, PitchTrack};
pub use wav::{parse_wav, write_wav_pcm16, WavError};

use crate::constants::MFCC_WINDOW_S;

pub const SUPPORTED_SAMPLE_RATES: [u32; 4] = [16000, 22050, 44100, 48000];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AudioError {
    #[error("unsupported sample rate {0} Hz (16000, 22050, 44100 or 48000 expected)")]
    SampleRate(u32),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("audio has {samples} samples, shorter than one {window_ms} ms analysis window ({needed} samples)")]
    TooShort {
        samples: usize,
        needed: usize,
        window_ms: u32,
    },
}

/// Mono audio normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    clip_id: String,
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(clip_id: impl Into<String>, samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if !SUPPORTED_SAMPLE_RATES.contains(&sample_rate) {
            return Err(AudioError::SampleRate(sample_rate));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        let needed = samples_for(MFCC_WINDOW_S, sample_rate);
        if samples.len() < needed {
            return Err(AudioError::TooShort {
                samples: samples.len(),
                needed,
                window_ms: 25,
            });
        }
        Ok(Self {
            clip_id: clip_id.into(),
            samples,
            sample_rate,
        })
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Seconds to a whole number of samples.
pub fn samples_for(seconds: f64, sample_rate: u32) -> usize {
    (seconds * sample_rate as f64).round() as usize
}
