//! Minimal RIFF/WAVE reader and PCM16 writer.

use super::{AudioBuffer, AudioError};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WavError {
    #[error("not a RIFF/WAVE file")]
    NotRiff,
    #[error("truncated {0}")]
    Truncated(&'static str),
    #[error("missing `{0}` chunk")]
    MissingChunk(&'static str),
    #[error("unsupported encoding: format tag {format:#06x} with {bits} bits per sample (PCM 16-bit or float 32-bit expected)")]
    UnsupportedEncoding { format: u16, bits: u16 },
    #[error("unsupported channel count {0} (1 or 2 expected)")]
    UnsupportedChannels(u16),
    #[error("data chunk is empty")]
    EmptyData,
    #[error(transparent)]
    Audio(#[from] AudioError),
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

/// Decodes a PCM16 or float32 WAV file into a mono buffer. Stereo is mixed
/// down by the channel mean; integer samples are scaled by 1/32768.
pub fn parse_wav(bytes: &[u8], clip_id: &str) -> Result<AudioBuffer, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::NotRiff);
    }
    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    let mut at = 12;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = u32_at(bytes, at + 4) as usize;
        let body_start = at + 8;
        let body_end = body_start.checked_add(size).ok_or(WavError::Truncated("chunk"))?;
        if body_end > bytes.len() {
            return Err(WavError::Truncated(if id == b"data" { "data chunk" } else { "chunk" }));
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(WavError::Truncated("fmt chunk"));
                }
                let mut tag = u16_at(body, 0);
                if tag == FORMAT_EXTENSIBLE {
                    if body.len() < 26 {
                        return Err(WavError::Truncated("extensible fmt chunk"));
                    }
                    tag = u16_at(body, 24);
                }
                format = Some(Format {
                    tag,
                    channels: u16_at(body, 2),
                    sample_rate: u32_at(body, 4),
                    bits: u16_at(body, 14),
                });
            }
            b"data" => data = Some(body),
            _ => {}
        }
        at = body_end + (size & 1);
    }
    let format = format.ok_or(WavError::MissingChunk("fmt "))?;
    let data = data.ok_or(WavError::MissingChunk("data"))?;

    let bytes_per_sample = match (format.tag, format.bits) {
        (FORMAT_PCM, 16) => 2,
        (FORMAT_FLOAT, 32) => 4,
        (tag, bits) => return Err(WavError::UnsupportedEncoding { format: tag, bits }),
    };
    if !(1..=2).contains(&format.channels) {
        return Err(WavError::UnsupportedChannels(format.channels));
    }
    if data.is_empty() {
        return Err(WavError::EmptyData);
    }
    let channels = format.channels as usize;
    let frame_bytes = bytes_per_sample * channels;
    if data.len() % frame_bytes != 0 {
        return Err(WavError::Truncated("sample frame"));
    }
    let decode = |chunk: &[u8]| -> f64 {
        if bytes_per_sample == 2 {
            i16::from_le_bytes([chunk[0], chunk[1]]) as f64 / 32768.0
        } else {
            f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64
        }
    };
    let samples: Vec<f64> = data
        .chunks_exact(frame_bytes)
        .map(|frame| {
            let sum: f64 = frame.chunks_exact(bytes_per_sample).map(decode).sum();
            sum / channels as f64
        })
        .collect();
    Ok(AudioBuffer::new(clip_id, samples, format.sample_rate)?)
}

/// Encodes mono samples as 16-bit PCM (`round(x * 32768)`, saturated).
pub fn write_wav_pcm16(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}
