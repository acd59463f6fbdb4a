//! Log-mel filterbank (FBANK) features.
//!
//! Per frame: Hann window, real-FFT power spectrum, triangular mel filters
//! spanning [20 Hz, Nyquist], natural log with an energy floor. Defaults are
//! 80 bins at 25 ms / 10 ms framing with no pre-emphasis and no dither; all
//! of it is configurable. Internals run in f64 so the gain-covariance
//! property (scaling samples by c shifts every log cell by 2·ln c) holds to
//! tight tolerance.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::features::audio::{AudioBuffer, TARGET_SAMPLE_RATE};

/// Energies below this are clamped before the log.
pub const ENERGY_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FbankConfig {
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_frame_length")]
    pub frame_length_ms: f64,
    #[serde(default = "default_frame_shift")]
    pub frame_shift_ms: f64,
    #[serde(default = "default_low_freq")]
    pub low_freq_hz: f64,
}

fn default_bins() -> usize {
    80
}
fn default_frame_length() -> f64 {
    25.0
}
fn default_frame_shift() -> f64 {
    10.0
}
fn default_low_freq() -> f64 {
    20.0
}

impl Default for FbankConfig {
    fn default() -> Self {
        FbankConfig {
            bins: default_bins(),
            frame_length_ms: default_frame_length(),
            frame_shift_ms: default_frame_shift(),
            low_freq_hz: default_low_freq(),
        }
    }
}

/// T x F matrix of log-mel energies, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    frames: usize,
    bins: usize,
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
}

impl FeatureMatrix {
    pub fn from_rows(
        data: Vec<f64>,
        frames: usize,
        bins: usize,
        frame_length_ms: f64,
        frame_shift_ms: f64,
    ) -> Self {
        assert_eq!(data.len(), frames * bins, "data length must equal T*F");
        FeatureMatrix {
            data,
            frames,
            bins,
            frame_length_ms,
            frame_shift_ms,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn frame_rate_hz(&self) -> f64 {
        1000.0 / self.frame_shift_ms
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the triangular filters, derived from equal
/// spacing on the mel scale between `low_hz` and Nyquist.
pub fn mel_center_frequencies_hz(bins: usize, sample_rate_hz: u32, low_hz: f64) -> Vec<f64> {
    let nyquist = sample_rate_hz as f64 / 2.0;
    let mel_lo = hz_to_mel(low_hz);
    let mel_hi = hz_to_mel(nyquist);
    let step = (mel_hi - mel_lo) / (bins + 1) as f64;
    (1..=bins).map(|i| mel_to_hz(mel_lo + step * i as f64)).collect()
}

/// One triangular filter: weights over a contiguous run of FFT bins.
struct MelFilter {
    first_fft_bin: usize,
    weights: Vec<f64>,
}

/// Triangle weights are computed on the mel axis, so any point between the
/// first and last filter centers sees the falling edge of one filter and the
/// rising edge of the next sum to exactly 1.
fn build_filterbank(bins: usize, n_fft: usize, sample_rate_hz: u32, low_hz: f64) -> Vec<MelFilter> {
    let nyquist = sample_rate_hz as f64 / 2.0;
    let mel_lo = hz_to_mel(low_hz);
    let mel_hi = hz_to_mel(nyquist);
    let step = (mel_hi - mel_lo) / (bins + 1) as f64;
    let n_bins = n_fft / 2 + 1;
    let fft_hz = |k: usize| k as f64 * sample_rate_hz as f64 / n_fft as f64;

    (0..bins)
        .map(|b| {
            let left = mel_lo + step * b as f64;
            let center = left + step;
            let right = center + step;
            let mut first = None;
            let mut weights = Vec::new();
            for k in 0..n_bins {
                let mel = hz_to_mel(fft_hz(k));
                let w = if mel <= left || mel >= right {
                    0.0
                } else if mel <= center {
                    (mel - left) / step
                } else {
                    (right - mel) / step
                };
                if w > 0.0 {
                    if first.is_none() {
                        first = Some(k);
                    }
                    weights.push(w);
                } else if first.is_some() {
                    break;
                }
            }
            MelFilter {
                first_fft_bin: first.unwrap_or(0),
                weights,
            }
        })
        .collect()
}

/// Dense `bins x (n_fft/2 + 1)` filterbank matrix; used by property tests
/// and anything that wants to inspect the triangles directly.
pub fn filterbank_matrix(bins: usize, n_fft: usize, sample_rate_hz: u32, low_hz: f64) -> Vec<Vec<f64>> {
    let filters = build_filterbank(bins, n_fft, sample_rate_hz, low_hz);
    let n_bins = n_fft / 2 + 1;
    filters
        .iter()
        .map(|f| {
            let mut row = vec![0.0; n_bins];
            for (i, &w) in f.weights.iter().enumerate() {
                row[f.first_fft_bin + i] = w;
            }
            row
        })
        .collect()
}

fn next_pow2(n: usize) -> usize {
    let mut p = 1;
    while p < n {
        p <<= 1;
    }
    p
}

/// Compute FBANK features. The buffer must already be at 16 kHz
/// (`AudioBuffer::into_16k` handles ingest). Audio shorter than one window
/// yields an empty matrix, not an error.
pub fn compute_fbank(audio: &AudioBuffer, cfg: &FbankConfig) -> Result<FeatureMatrix> {
    if audio.sample_rate_hz != TARGET_SAMPLE_RATE {
        return Err(Error::SampleRate {
            expected: TARGET_SAMPLE_RATE,
            got: audio.sample_rate_hz,
        });
    }
    if cfg.bins == 0 {
        return Err(Error::Config("fbank bins must be >= 1".to_string()));
    }
    let sr = audio.sample_rate_hz as f64;
    let window = (cfg.frame_length_ms / 1000.0 * sr).round() as usize;
    let hop = (cfg.frame_shift_ms / 1000.0 * sr).round() as usize;
    if window == 0 || hop == 0 {
        return Err(Error::Config("frame length/shift too small".to_string()));
    }

    let n = audio.samples.len();
    let frames = if n >= window { 1 + (n - window) / hop } else { 0 };
    let mut out = FeatureMatrix {
        data: vec![0.0; frames * cfg.bins],
        frames,
        bins: cfg.bins,
        frame_length_ms: cfg.frame_length_ms,
        frame_shift_ms: cfg.frame_shift_ms,
    };
    if frames == 0 {
        return Ok(out);
    }

    let n_fft = next_pow2(window);
    let hann: Vec<f64> = (0..window)
        .map(|i| {
            0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / (window - 1) as f64).cos()
        })
        .collect();
    let filters = build_filterbank(cfg.bins, n_fft, audio.sample_rate_hz, cfg.low_freq_hz);

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut power = vec![0.0f64; n_fft / 2 + 1];

    for t in 0..frames {
        let start = t * hop;
        for i in 0..window {
            buf[i] = Complex::new(audio.samples[start + i] as f64 * hann[i], 0.0);
        }
        for slot in buf.iter_mut().skip(window) {
            *slot = Complex::new(0.0, 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in power.iter_mut().enumerate() {
            *p = buf[k].norm_sqr();
        }
        let row = &mut out.data[t * cfg.bins..(t + 1) * cfg.bins];
        for (b, filter) in filters.iter().enumerate() {
            let mut energy = 0.0;
            for (i, &w) in filter.weights.iter().enumerate() {
                energy += w * power[filter.first_fft_bin + i];
            }
            row[b] = energy.max(ENERGY_FLOOR).ln();
        }
    }
    Ok(out)
}
