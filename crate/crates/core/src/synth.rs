//! Deterministic synthetic corpora for end-to-end checks.
//!
//! Each sentence gets a tone-sequence "utterance"; sites either share that
//! audio exactly (clone), hear it through seeded noise (perturbed), or get
//! unrelated audio entirely (random). Clone corpora must retrieve perfectly,
//! random corpora at chance level, and perturbed ones in between, which
//! gives the retrieval stack a full-range calibration without any real data.

use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::corpus::{save_manifest, Manifest, Site, Subgroup, Utterance};
use crate::error::{Error, Result};
use crate::features::write_wav_16bit;

const SAMPLE_RATE: u32 = 16_000;
const TONE_SEGMENT_S: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SynthMode {
    Clone,
    Perturbed { snr_db: f64 },
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subgroups: usize,
    pub sites_per_subgroup: usize,
    pub n_sentences: u32,
    pub mode: SynthMode,
    pub seed: u64,
    /// Utterance length in seconds.
    pub duration_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subgroups: 2,
            sites_per_subgroup: 2,
            n_sentences: 10,
            mode: SynthMode::Clone,
            seed: 1,
            duration_s: 1.0,
        }
    }
}

fn subgroup_for(index: usize) -> Subgroup {
    match index {
        0 => Subgroup::MandarinDialect,
        1 => Subgroup::Min,
        2 => Subgroup::Wu,
        3 => Subgroup::Yue,
        4 => Subgroup::Xiang,
        5 => Subgroup::Gan,
        6 => Subgroup::Hakka,
        other => Subgroup::Other(format!("synth-{other}")),
    }
}

fn mix_seed(base: u64, site: u64, sentence: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(site.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(sentence.wrapping_mul(0x94D0_49BB_1331_11EB))
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.next_u32() as f64 / 4_294_967_296.0
}

/// Sequence of pure tones with seeded frequencies; the "sentence".
fn tone_sequence(seed: u64, duration_s: f64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (duration_s * SAMPLE_RATE as f64).round() as usize;
    let seg = (TONE_SEGMENT_S * SAMPLE_RATE as f64).round() as usize;
    let mut samples = Vec::with_capacity(n);
    while samples.len() < n {
        let freq = 200.0 + uniform(&mut rng) * 3300.0;
        let remaining = n - samples.len();
        for i in 0..seg.min(remaining) {
            let t = i as f64 / SAMPLE_RATE as f64;
            samples.push((0.35 * (std::f64::consts::TAU * freq * t).sin()) as f32);
        }
    }
    samples
}

fn add_noise(samples: &mut [f32], snr_db: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signal_power: f64 =
        samples.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / samples.len() as f64;
    let noise_power = signal_power / 10f64.powf(snr_db / 10.0);
    let scale = noise_power.sqrt();
    for s in samples.iter_mut() {
        // Box-Muller from two uniforms
        let u1 = uniform(&mut rng).max(1e-12);
        let u2 = uniform(&mut rng);
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        *s = (*s as f64 + z * scale) as f32;
    }
}

/// Generate manifest plus audio directory under `out_dir`; returns the
/// manifest path. Layout: `corpus.jsonl` and `audio/<site>__<sentence>.wav`.
pub fn make_synthetic_corpus(cfg: &SynthConfig, out_dir: &Path) -> Result<PathBuf> {
    if cfg.n_subgroups == 0 || cfg.sites_per_subgroup == 0 || cfg.n_sentences == 0 {
        return Err(Error::Config(
            "synthetic corpus requires at least one subgroup, site and sentence".to_string(),
        ));
    }
    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;

    let mut sites = Vec::new();
    let mut utterances = Vec::new();
    for g in 0..cfg.n_subgroups {
        let subgroup = subgroup_for(g);
        for s in 0..cfg.sites_per_subgroup {
            let site_index = (g * cfg.sites_per_subgroup + s) as u64;
            let site_id = format!("g{g:02}s{s:02}");
            sites.push(Site {
                site_id: site_id.clone(),
                display_name: format!("Synthetic {site_id}"),
                subgroup: subgroup.clone(),
            });
            for sentence in 1..=cfg.n_sentences {
                let mut samples = match cfg.mode {
                    // shared per-sentence audio
                    SynthMode::Clone | SynthMode::Perturbed { .. } => {
                        tone_sequence(mix_seed(cfg.seed, 0, sentence as u64), cfg.duration_s)
                    }
                    // independent audio per (site, sentence)
                    SynthMode::Random => tone_sequence(
                        mix_seed(cfg.seed, site_index + 1, sentence as u64),
                        cfg.duration_s,
                    ),
                };
                if let SynthMode::Perturbed { snr_db } = cfg.mode {
                    add_noise(
                        &mut samples,
                        snr_db,
                        mix_seed(cfg.seed ^ 0xABCD, site_index + 1, sentence as u64),
                    );
                }
                let file = format!("audio/{site_id}__{sentence}.wav");
                write_wav_16bit(&out_dir.join(&file), &samples, SAMPLE_RATE)?;
                utterances.push(Utterance {
                    site_id: site_id.clone(),
                    sentence_id: sentence,
                    audio_path: file,
                    transcript: None,
                    duration_s: Some(samples.len() as f64 / SAMPLE_RATE as f64),
                });
            }
        }
    }

    let manifest = Manifest {
        sites,
        utterances,
        audio_root: out_dir.to_path_buf(),
    };
    let manifest_path = out_dir.join("corpus.jsonl");
    save_manifest(&manifest, &manifest_path)?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_manifest;

    #[test]
    fn clone_mode_shares_audio_across_sites() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig::default();
        let manifest_path = make_synthetic_corpus(&cfg, dir.path()).unwrap();
        let (manifest, warnings) = load_manifest(&manifest_path, true).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(manifest.sites.len(), 4);
        assert_eq!(manifest.utterances.len(), 40);

        let a = std::fs::read(dir.path().join("audio/g00s00__1.wav")).unwrap();
        let b = std::fs::read(dir.path().join("audio/g01s01__1.wav")).unwrap();
        assert_eq!(a, b);
        let c = std::fs::read(dir.path().join("audio/g00s00__2.wav")).unwrap();
        assert_ne!(a, c, "different sentences must differ");
    }

    #[test]
    fn random_mode_differs_across_sites() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            mode: SynthMode::Random,
            ..SynthConfig::default()
        };
        make_synthetic_corpus(&cfg, dir.path()).unwrap();
        let a = std::fs::read(dir.path().join("audio/g00s00__1.wav")).unwrap();
        let b = std::fs::read(dir.path().join("audio/g00s01__1.wav")).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            mode: SynthMode::Perturbed { snr_db: 10.0 },
            ..SynthConfig::default()
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        make_synthetic_corpus(&cfg, d1.path()).unwrap();
        make_synthetic_corpus(&cfg, d2.path()).unwrap();
        let a = std::fs::read(d1.path().join("audio/g01s00__3.wav")).unwrap();
        let b = std::fs::read(d2.path().join("audio/g01s00__3.wav")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn perturbed_noise_level_tracks_snr() {
        let clean = tone_sequence(42, 1.0);
        for (snr, max_rms) in [(30.0, 0.03), (0.0, 0.5)] {
            let mut noisy = clean.clone();
            add_noise(&mut noisy, snr, 7);
            let diff_rms = (clean
                .iter()
                .zip(&noisy)
                .map(|(c, n)| ((n - c) as f64).powi(2))
                .sum::<f64>()
                / clean.len() as f64)
                .sqrt();
            assert!(diff_rms > 0.0 && diff_rms < max_rms, "snr {snr}: rms {diff_rms}");
        }
    }
}
