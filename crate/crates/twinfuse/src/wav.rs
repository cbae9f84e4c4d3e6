//! RIFF/WAVE reading and writing, PCM 16-bit mono only.

use std::fs;
use std::path::Path;

use twinfuse_core::audio::Signal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WavError {
    #[error("not a RIFF/WAVE file")]
    NotWave,
    #[error("file is truncated")]
    Truncated,
    #[error("missing `{0}` chunk")]
    MissingChunk(&'static str),
    #[error("unsupported encoding (format tag {0}), only PCM is read")]
    UnsupportedEncoding(u16),
    #[error("unsupported channel count {0}, only mono is read")]
    UnsupportedChannels(u16),
    #[error("unsupported sample width of {0} bits, only 16 is read")]
    UnsupportedBits(u16),
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
}

const PCM: u16 = 1;

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes PCM16 mono samples scaled by 1/32768, returning them with the
/// sample rate.
pub fn decode_wav(bytes: &[u8]) -> Result<(Vec<f64>, u32), WavError> {
    if bytes.len() < 12 {
        return Err(if bytes.starts_with(b"RIFF") || bytes.is_empty() {
            WavError::Truncated
        } else {
            WavError::NotWave
        });
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::NotWave);
    }
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + 16 > bytes.len() {
                    return Err(WavError::Truncated);
                }
                fmt = Some((
                    u16_at(bytes, body),
                    u16_at(bytes, body + 2),
                    u32_at(bytes, body + 4),
                    u16_at(bytes, body + 14),
                ));
            }
            b"data" => {
                let (tag, channels, rate, bits) = fmt.ok_or(WavError::MissingChunk("fmt "))?;
                if tag != PCM {
                    return Err(WavError::UnsupportedEncoding(tag));
                }
                if channels != 1 {
                    return Err(WavError::UnsupportedChannels(channels));
                }
                if bits != 16 {
                    return Err(WavError::UnsupportedBits(bits));
                }
                if rate == 0 {
                    return Err(WavError::InvalidSampleRate(rate));
                }
                if body + size > bytes.len() || size % 2 != 0 {
                    return Err(WavError::Truncated);
                }
                let samples = bytes[body..body + size]
                    .chunks_exact(2)
                    .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])) / 32768.0)
                    .collect();
                return Ok((samples, rate));
            }
            _ => {}
        }
        // chunks are padded to an even length
        pos = body + size + (size & 1);
    }
    if pos < bytes.len() {
        return Err(WavError::Truncated);
    }
    Err(WavError::MissingChunk("data"))
}

/// Quantizes samples to PCM16 (clipping to the representable range).
pub fn encode_wav(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + samples.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn read_wav(path: &Path) -> Result<Signal> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (samples, rate) = decode_wav(&bytes).map_err(|source| Error::Wav {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Signal::new(samples, rate)?)
}

pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    fs::write(path, encode_wav(samples, sample_rate)).map_err(|e| Error::io(path, e))
}
