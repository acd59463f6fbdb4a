//! Frame-level embedding sequences and their storage.
//!
//! The retrieval pipeline only assumes "one embedding sequence per
//! utterance, uniform dimension"; where those sequences come from is a
//! provider decision. Two providers exist: import of externally computed
//! sequences, and a deterministic baseline encoder used for desk-scale
//! experiments (frame stacking plus a seeded random projection).

pub mod format;

use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::corpus::Manifest;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub use format::{parse_sqe_filename, read_sequence, sqe_filename, write_sequence};

/// T x D matrix of frame embeddings for one utterance, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    data: Vec<f32>,
    frames: usize,
    dim: usize,
    pub frame_rate_hz: f32,
    pub normalized: bool,
}

impl EmbeddingSequence {
    pub fn from_parts(
        data: Vec<f32>,
        frames: usize,
        dim: usize,
        frame_rate_hz: f32,
        normalized: bool,
    ) -> Self {
        assert_eq!(data.len(), frames * dim, "data length must equal T*D");
        EmbeddingSequence {
            data,
            frames,
            dim,
            frame_rate_hz,
            normalized,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    /// L2-normalize every row. Rows with norm below 1e-12 become zero
    /// vectors (never NaN); the count of such rows is returned alongside.
    pub fn l2_normalized(&self) -> (EmbeddingSequence, usize) {
        let mut data = self.data.clone();
        let mut zeroed = 0usize;
        for t in 0..self.frames {
            let row = &mut data[t * self.dim..(t + 1) * self.dim];
            let norm = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
            if norm < 1e-12 {
                row.fill(0.0);
                zeroed += 1;
            } else {
                let inv = (1.0 / norm) as f32;
                for v in row.iter_mut() {
                    *v *= inv;
                }
            }
        }
        (
            EmbeddingSequence {
                data,
                frames: self.frames,
                dim: self.dim,
                frame_rate_hz: self.frame_rate_hz,
                normalized: true,
            },
            zeroed,
        )
    }
}

pub fn l2_normalize(seq: &EmbeddingSequence) -> EmbeddingSequence {
    seq.l2_normalized().0
}

/// Identifier of the baseline provider, recorded in report provenance. The
/// suffix versions the exact generation scheme (ChaCha8 keystream, row-major
/// matrix fill, u32 -> [-1, 1) mapping); any change to it must bump this.
pub const BASELINE_PROVIDER_ID: &str = "baseline-chacha8-v1";

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BaselineConfig {
    #[serde(rename = "dim", default = "default_dim")]
    pub out_dim: usize,
    #[serde(default = "default_stack")]
    pub stack: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_dim() -> usize {
    64
}
fn default_stack() -> usize {
    4
}
fn default_stride() -> usize {
    4
}
fn default_seed() -> u64 {
    17
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            out_dim: default_dim(),
            stack: default_stack(),
            stride: default_stride(),
            seed: default_seed(),
        }
    }
}

fn chacha_uniform(rng: &mut ChaCha8Rng) -> f32 {
    // u32 -> [-1, 1), derived here rather than through a distribution type
    // so the value stream is pinned by the provider id
    ((rng.next_u32() as f64) * (2.0 / 4_294_967_296.0) - 1.0) as f32
}

/// The seeded projection matrix, `out_dim x (stack * feature_bins)`,
/// row-major. Depends only on the config and the feature width.
pub fn baseline_projection(cfg: &BaselineConfig, feature_bins: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let len = cfg.out_dim * cfg.stack * feature_bins;
    (0..len).map(|_| chacha_uniform(&mut rng)).collect()
}

/// Deterministic baseline encoder: consecutive groups of `stack` frames
/// (advancing by `stride`, repeat-last padded) are concatenated, projected
/// through the seeded random matrix, and L2-normalized. Output frame rate is
/// the input rate divided by `stride`.
pub fn baseline_encode(features: &FeatureMatrix, cfg: &BaselineConfig) -> Result<EmbeddingSequence> {
    if features.frames() == 0 {
        return Err(Error::EmptySequence {
            context: "baseline encoder input".to_string(),
        });
    }
    if cfg.out_dim == 0 || cfg.stack == 0 || cfg.stride == 0 {
        return Err(Error::Config(
            "baseline encoder: dim, stack and stride must be >= 1".to_string(),
        ));
    }
    let t_in = features.frames();
    let bins = features.bins();
    let in_dim = cfg.stack * bins;
    let projection = baseline_projection(cfg, bins);
    let t_out = t_in.div_ceil(cfg.stride);

    let mut stacked = vec![0.0f64; in_dim];
    let mut data = vec![0.0f32; t_out * cfg.out_dim];
    for g in 0..t_out {
        let start = g * cfg.stride;
        for s in 0..cfg.stack {
            let src = features.row((start + s).min(t_in - 1));
            stacked[s * bins..(s + 1) * bins].copy_from_slice(src);
        }
        let out_row = &mut data[g * cfg.out_dim..(g + 1) * cfg.out_dim];
        for (o, slot) in out_row.iter_mut().enumerate() {
            let weights = &projection[o * in_dim..(o + 1) * in_dim];
            let mut acc = 0.0f64;
            for (w, x) in weights.iter().zip(&stacked) {
                acc += *w as f64 * *x;
            }
            *slot = acc as f32;
        }
    }

    let raw = EmbeddingSequence {
        data,
        frames: t_out,
        dim: cfg.out_dim,
        frame_rate_hz: features.frame_rate_hz() as f32 / cfg.stride as f32,
        normalized: false,
    };
    Ok(raw.l2_normalized().0)
}

/// Seeded random sequence with L2-normalized rows. Handy for tests,
/// benchmarks and chance-level baselines.
pub fn random_unit_sequence(seed: u64, frames: usize, dim: usize) -> EmbeddingSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f32> = (0..frames * dim).map(|_| chacha_uniform(&mut rng)).collect();
    EmbeddingSequence::from_parts(data, frames, dim, 25.0, false)
        .l2_normalized()
        .0
}

/// Immutable map from `(site_id, sentence_id)` to an embedding sequence,
/// with a uniform dimension across all entries.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    entries: BTreeMap<(String, u32), EmbeddingSequence>,
    dim: usize,
    pub provider_id: String,
}

impl EmbeddingStore {
    pub fn build(
        provider_id: impl Into<String>,
        entries: Vec<((String, u32), EmbeddingSequence)>,
    ) -> Result<EmbeddingStore> {
        let mut map = BTreeMap::new();
        let mut dim = None;
        for ((site, sentence), seq) in entries {
            if seq.frames() == 0 {
                return Err(Error::EmptySequence {
                    context: format!("({site}, {sentence})"),
                });
            }
            match dim {
                None => dim = Some(seq.dim()),
                Some(d) if d != seq.dim() => {
                    return Err(Error::DimensionMismatch {
                        context: format!("({site}, {sentence})"),
                        expected: d,
                        got: seq.dim(),
                    });
                }
                Some(_) => {}
            }
            map.insert((site, sentence), seq);
        }
        Ok(EmbeddingStore {
            dim: dim.unwrap_or(0),
            entries: map,
            provider_id: provider_id.into(),
        })
    }

    pub fn get(&self, site_id: &str, sentence_id: u32) -> Option<&EmbeddingSequence> {
        self.entries.get(&(site_id.to_string(), sentence_id))
    }

    pub fn contains(&self, site_id: &str, sentence_id: u32) -> bool {
        self.entries.contains_key(&(site_id.to_string(), sentence_id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, u32), &EmbeddingSequence)> {
        self.entries.iter()
    }
}

/// Build a store from one `.sqe` file per manifest utterance. Utterances
/// whose file is missing are excluded with a warning; dimension mismatches
/// and corrupt files are hard errors.
pub fn import_embeddings(dir: &Path, manifest: &Manifest) -> Result<(EmbeddingStore, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut present = Vec::new();
    for utt in &manifest.utterances {
        let path = dir.join(sqe_filename(&utt.site_id, utt.sentence_id));
        if path.is_file() {
            present.push((utt.site_id.clone(), utt.sentence_id, path));
        } else {
            warnings.push(format!(
                "no embedding file for ({}, {}): {}",
                utt.site_id,
                utt.sentence_id,
                path.display()
            ));
        }
    }
    let loaded: Result<Vec<_>> = present
        .into_par_iter()
        .map(|(site, sentence, path)| {
            let seq = read_sequence(&path)?;
            if seq.frames() == 0 {
                return Err(Error::EmptySequence {
                    context: path.display().to_string(),
                });
            }
            Ok(((site, sentence), seq))
        })
        .collect();
    let store = EmbeddingStore::build(format!("import:{}", dir.display()), loaded?)?;
    Ok((store, warnings))
}
