//! PCM WAV decode/encode and sample-rate handling.
//!
//! Only the formats the corpus actually uses are supported: RIFF/WAVE with
//! 16-bit integer or 32-bit float PCM, any channel count (averaged to mono).

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

pub const TARGET_SAMPLE_RATE: u32 = 16_000;

/// Mono audio, samples in [-1, 1].
#[derive(Debug, Clone)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Bring the buffer to 16 kHz. In strict mode any other rate is an
    /// error; otherwise the buffer is linearly resampled.
    pub fn into_16k(self, strict: bool) -> Result<AudioBuffer> {
        if self.sample_rate_hz == TARGET_SAMPLE_RATE {
            return Ok(self);
        }
        if strict {
            return Err(Error::SampleRate {
                expected: TARGET_SAMPLE_RATE,
                got: self.sample_rate_hz,
            });
        }
        Ok(AudioBuffer {
            samples: resample_linear(&self.samples, self.sample_rate_hz, TARGET_SAMPLE_RATE),
            sample_rate_hz: TARGET_SAMPLE_RATE,
        })
    }
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct WavLayout {
    format: u16,
    channels: usize,
    sample_rate: u32,
    bits_per_sample: u16,
    data_start: usize,
    data_len: usize,
}

fn parse_layout(path: &Path, bytes: &[u8]) -> Result<WavLayout> {
    let fail = |msg: &str| Error::WavFormat {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(fail("not a RIFF/WAVE file"));
    }
    let mut fmt: Option<(u16, usize, u32, u16)> = None;
    let mut data: Option<(usize, usize)> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        if body + size > bytes.len() {
            return Err(fail("chunk extends past end of file"));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(fail("fmt chunk too short"));
                }
                let mut format = read_u16(bytes, body);
                let channels = read_u16(bytes, body + 2) as usize;
                let sample_rate = read_u32(bytes, body + 4);
                let bits = read_u16(bytes, body + 14);
                if format == 0xFFFE {
                    // WAVE_FORMAT_EXTENSIBLE: the real format tag leads the GUID
                    if size < 40 {
                        return Err(fail("extensible fmt chunk too short"));
                    }
                    format = read_u16(bytes, body + 24);
                }
                fmt = Some((format, channels, sample_rate, bits));
            }
            b"data" => {
                data = Some((body, size));
            }
            _ => {}
        }
        // chunks are word-aligned
        pos = body + size + (size & 1);
    }
    let (format, channels, sample_rate, bits_per_sample) =
        fmt.ok_or_else(|| fail("missing fmt chunk"))?;
    let (data_start, data_len) = data.ok_or_else(|| fail("missing data chunk"))?;
    if channels == 0 {
        return Err(fail("zero channels"));
    }
    Ok(WavLayout {
        format,
        channels,
        sample_rate,
        bits_per_sample,
        data_start,
        data_len,
    })
}

/// Decode a PCM WAV file to a mono buffer; multichannel input is averaged.
/// 16-bit samples map -32768 -> -1.0 exactly.
pub fn decode_wav(path: &Path) -> Result<AudioBuffer> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let layout = parse_layout(path, &bytes)?;
    let fail = |msg: String| Error::WavFormat {
        path: path.to_path_buf(),
        msg,
    };

    let data = &bytes[layout.data_start..layout.data_start + layout.data_len];
    let channels = layout.channels;
    let samples: Vec<f32> = match (layout.format, layout.bits_per_sample) {
        (1, 16) => {
            let frame_bytes = 2 * channels;
            let n_frames = data.len() / frame_bytes;
            (0..n_frames)
                .map(|i| {
                    let mut acc = 0.0f32;
                    for c in 0..channels {
                        let at = i * frame_bytes + 2 * c;
                        let v = i16::from_le_bytes([data[at], data[at + 1]]);
                        acc += v as f32 / 32768.0;
                    }
                    acc / channels as f32
                })
                .collect()
        }
        (3, 32) => {
            let frame_bytes = 4 * channels;
            let n_frames = data.len() / frame_bytes;
            (0..n_frames)
                .map(|i| {
                    let mut acc = 0.0f32;
                    for c in 0..channels {
                        let at = i * frame_bytes + 4 * c;
                        acc += f32::from_le_bytes([
                            data[at],
                            data[at + 1],
                            data[at + 2],
                            data[at + 3],
                        ]);
                    }
                    acc / channels as f32
                })
                .collect()
        }
        (format, bits) => {
            return Err(fail(format!(
                "unsupported codec: format tag {format}, {bits} bits per sample"
            )))
        }
    };

    Ok(AudioBuffer {
        samples,
        sample_rate_hz: layout.sample_rate,
    })
}

/// Read only the header and report the clip duration in seconds.
pub fn wav_duration_s(path: &Path) -> Result<f64> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let layout = parse_layout(path, &bytes)?;
    let bytes_per_frame = layout.channels * (layout.bits_per_sample as usize / 8);
    if bytes_per_frame == 0 || layout.sample_rate == 0 {
        return Err(Error::WavFormat {
            path: path.to_path_buf(),
            msg: "degenerate fmt chunk".to_string(),
        });
    }
    Ok((layout.data_len / bytes_per_frame) as f64 / layout.sample_rate as f64)
}

/// Write mono 16-bit PCM. Samples are clamped to [-1, 1].
pub fn write_wav_16bit(path: &Path, samples: &[f32], sample_rate_hz: u32) -> Result<()> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(sample_rate_hz * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        // symmetric with the decoder's /32768 scaling
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Linear interpolation resampler. Good enough for the lenient ingest path;
/// strict mode refuses non-16 kHz input instead.
pub fn resample_linear(samples: &[f32], from_hz: u32, to_hz: u32) -> Vec<f32> {
    if from_hz == to_hz || samples.is_empty() {
        return samples.to_vec();
    }
    let out_len = ((samples.len() as u64 * to_hz as u64) / from_hz as u64) as usize;
    let step = from_hz as f64 / to_hz as f64;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let lo = pos.floor() as usize;
            let frac = (pos - lo as f64) as f32;
            let a = samples[lo.min(samples.len() - 1)];
            let b = samples[(lo + 1).min(samples.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}
