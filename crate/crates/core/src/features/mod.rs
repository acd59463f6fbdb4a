//! Audio decoding and acoustic front-end.

pub mod audio;
pub mod fbank;

pub use audio::{decode_wav, resample_linear, wav_duration_s, write_wav_16bit, AudioBuffer};
pub use fbank::{
    compute_fbank, filterbank_matrix, mel_center_frequencies_hz, FbankConfig, FeatureMatrix,
};
