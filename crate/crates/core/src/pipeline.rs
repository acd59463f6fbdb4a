//! End-to-end orchestration: ingest -> features -> embeddings -> retrieval
//! -> report, with content-hash caching per stage and full run provenance.
//!
//! Feature and embedding files are cached next to a `.key` sidecar holding
//! the hash of their inputs and parameters; a stage recomputes a file only
//! when the key changes. All randomness flows from explicit seeds in the
//! config, so identical configs and inputs give byte-identical reports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{corpus_stats, load_manifest, CorpusStats, Manifest};
use crate::embed::{
    baseline_encode, import_embeddings, read_sequence, sqe_filename, write_sequence,
    BaselineConfig, EmbeddingSequence, EmbeddingStore, BASELINE_PROVIDER_ID,
};
use crate::error::{Error, Result};
use crate::features::{compute_fbank, decode_wav, FbankConfig, FeatureMatrix};
use crate::hash::{sha256_hex, sha256_hex_file, sha256_hex_parts};
use crate::report::{render_csv, render_markdown, ReportProvenance};
use crate::retrieval::{recall_matrix, PairRetrievalResult, RecallMatrix, RetrievalPolicy};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportProvider {
    pub dir: PathBuf,
}

/// Exactly one provider must be set; a config with both (or neither) is
/// rejected before anything runs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProviderConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub import: Option<ImportProvider>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub features: FbankConfig,
    pub provider: ProviderConfig,
    /// L2-normalize frames before similarity (dot products become cosines).
    #[serde(default = "default_true")]
    pub normalize: bool,
    #[serde(default)]
    pub retrieval: RetrievalPolicy,
    /// 0 means all available cores; 1 gives a fully serial run.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub strict: bool,
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn from_toml_str(content: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(content).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&content)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.provider.baseline, &self.provider.import) {
            (Some(_), Some(_)) => Err(Error::Config(
                "both baseline and import providers are set; pick one".to_string(),
            )),
            (None, None) => Err(Error::Config(
                "no embedding provider configured; set [provider.baseline] or [provider.import]"
                    .to_string(),
            )),
            _ => Ok(()),
        }
    }

    /// Canonical serialized form; its hash is recorded in every artifact.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn config_hash(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellReport {
    pub source: String,
    pub target: String,
    pub mean_recall: f64,
    pub n_pairs: usize,
}

/// Artifact locations, relative to the run's `out_dir`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportArtifacts {
    pub recall_matrix_csv: String,
    pub recall_matrix_md: String,
    pub pairs_jsonl: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: RunConfig,
    pub config_hash: String,
    pub manifest_hash: String,
    pub provider_id: String,
    pub toolkit_version: String,
    pub corpus: CorpusStats,
    pub subgroups: Vec<String>,
    pub cells: Vec<CellReport>,
    pub skipped_pairs: Vec<String>,
    pub artifacts: ReportArtifacts,
    pub warnings: Vec<String>,
    /// Wall-clock time per stage. Excluded from determinism guarantees.
    pub timings: Vec<StageTiming>,
}

pub struct RunOutput {
    pub report: EvalReport,
    pub matrix: RecallMatrix,
    pub pairs: Vec<PairRetrievalResult>,
}

fn cache_hit(out_file: &Path, key: &str) -> bool {
    if !out_file.is_file() {
        return false;
    }
    let key_file = key_path(out_file);
    matches!(std::fs::read_to_string(&key_file), Ok(existing) if existing == key)
}

fn key_path(out_file: &Path) -> PathBuf {
    let mut name = out_file.file_name().unwrap_or_default().to_os_string();
    name.push(".key");
    out_file.with_file_name(name)
}

fn write_key(out_file: &Path, key: &str) -> Result<()> {
    let key_file = key_path(out_file);
    std::fs::write(&key_file, key).map_err(|e| Error::io(&key_file, e))
}

/// Feature files are embedding-format files with D = mel bins; this converts
/// one back for the encoder. The frame length is metadata the format does
/// not carry, so the caller supplies it.
fn features_from_sequence(seq: &EmbeddingSequence, frame_length_ms: f64) -> FeatureMatrix {
    let frame_shift_ms = 1000.0 / seq.frame_rate_hz as f64;
    FeatureMatrix::from_rows(
        seq.data().iter().map(|&v| v as f64).collect(),
        seq.frames(),
        seq.dim(),
        frame_length_ms,
        frame_shift_ms,
    )
}

fn sequence_from_features(features: &FeatureMatrix) -> EmbeddingSequence {
    EmbeddingSequence::from_parts(
        features.data().iter().map(|&v| v as f32).collect(),
        features.frames(),
        features.bins(),
        features.frame_rate_hz() as f32,
        false,
    )
}

pub struct StageStats {
    pub computed: usize,
    pub cached: usize,
    pub skipped: usize,
    pub warnings: Vec<String>,
}

/// Decode audio and write one feature file per utterance into `out_dir`.
/// Cached by content hash of the audio bytes plus the feature parameters.
pub fn extract_features_stage(
    manifest: &Manifest,
    cfg: &FbankConfig,
    out_dir: &Path,
    strict: bool,
) -> Result<StageStats> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let params = format!(
        "fbank-v1 bins={} frame_length_ms={} frame_shift_ms={} low_freq_hz={}",
        cfg.bins, cfg.frame_length_ms, cfg.frame_shift_ms, cfg.low_freq_hz
    );
    let outcomes: Result<Vec<(bool, Option<String>)>> = manifest
        .utterances
        .par_iter()
        .map(|utt| {
            let audio_path = manifest.resolve_audio(utt);
            let audio_bytes = match std::fs::read(&audio_path) {
                Ok(bytes) => bytes,
                Err(e) => {
                    if strict {
                        return Err(Error::io(&audio_path, e));
                    }
                    return Ok((false, Some(format!(
                        "skipping ({}, {}): unreadable audio {}",
                        utt.site_id,
                        utt.sentence_id,
                        audio_path.display()
                    ))));
                }
            };
            let out_file = out_dir.join(sqe_filename(&utt.site_id, utt.sentence_id));
            let key = sha256_hex_parts(&[&audio_bytes, params.as_bytes()]);
            if cache_hit(&out_file, &key) {
                return Ok((true, None));
            }
            let audio = decode_wav(&audio_path)?.into_16k(strict)?;
            let features = compute_fbank(&audio, cfg)?;
            let warn = (features.frames() == 0).then(|| {
                format!(
                    "({}, {}): audio shorter than one window, empty feature matrix",
                    utt.site_id, utt.sentence_id
                )
            });
            write_sequence(&out_file, &sequence_from_features(&features))?;
            write_key(&out_file, &key)?;
            Ok((false, warn))
        })
        .collect();

    let outcomes = outcomes?;
    let cached = outcomes.iter().filter(|(hit, _)| *hit).count();
    let warnings: Vec<String> = outcomes.into_iter().filter_map(|(_, w)| w).collect();
    let skipped = warnings.iter().filter(|w| w.contains("skipping")).count();
    Ok(StageStats {
        computed: manifest.utterances.len() - cached - skipped,
        cached,
        skipped,
        warnings,
    })
}

/// Encode cached feature files into embedding files. Cached by content hash
/// of the feature file plus encoder parameters.
pub fn baseline_embed_stage(
    manifest: &Manifest,
    features_dir: &Path,
    cfg: &BaselineConfig,
    out_dir: &Path,
    frame_length_ms: f64,
) -> Result<StageStats> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let params = format!(
        "{BASELINE_PROVIDER_ID} dim={} stack={} stride={} seed={}",
        cfg.out_dim, cfg.stack, cfg.stride, cfg.seed
    );
    let outcomes: Result<Vec<(bool, Option<String>)>> = manifest
        .utterances
        .par_iter()
        .map(|utt| {
            let name = sqe_filename(&utt.site_id, utt.sentence_id);
            let feature_file = features_dir.join(&name);
            if !feature_file.is_file() {
                return Ok((false, Some(format!(
                    "skipping ({}, {}): no feature file",
                    utt.site_id, utt.sentence_id
                ))));
            }
            let feature_bytes =
                std::fs::read(&feature_file).map_err(|e| Error::io(&feature_file, e))?;
            let out_file = out_dir.join(&name);
            let key = sha256_hex_parts(&[&feature_bytes, params.as_bytes()]);
            if cache_hit(&out_file, &key) {
                return Ok((true, None));
            }
            let features = features_from_sequence(&read_sequence(&feature_file)?, frame_length_ms);
            if features.frames() == 0 {
                return Ok((false, Some(format!(
                    "skipping ({}, {}): empty feature matrix",
                    utt.site_id, utt.sentence_id
                ))));
            }
            let encoded = baseline_encode(&features, cfg)?;
            write_sequence(&out_file, &encoded)?;
            write_key(&out_file, &key)?;
            Ok((false, None))
        })
        .collect();

    let outcomes = outcomes?;
    let cached = outcomes.iter().filter(|(hit, _)| *hit).count();
    let warnings: Vec<String> = outcomes.into_iter().filter_map(|(_, w)| w).collect();
    let skipped = warnings.len();
    Ok(StageStats {
        computed: manifest.utterances.len() - cached - skipped,
        cached,
        skipped,
        warnings,
    })
}

fn normalize_store(store: EmbeddingStore, warnings: &mut Vec<String>) -> Result<EmbeddingStore> {
    let provider = store.provider_id.clone();
    let mut zeroed_total = 0usize;
    let entries = store
        .iter()
        .map(|(key, seq)| {
            let normalized = if seq.normalized {
                seq.clone()
            } else {
                let (normalized, zeroed) = seq.l2_normalized();
                zeroed_total += zeroed;
                normalized
            };
            (key.clone(), normalized)
        })
        .collect();
    if zeroed_total > 0 {
        warnings.push(format!(
            "{zeroed_total} zero-norm frames mapped to zero vectors during normalization"
        ));
    }
    EmbeddingStore::build(provider, entries)
}

fn run_stages(cfg: &RunConfig) -> Result<RunOutput> {
    let mut timings = Vec::new();
    let mut warnings = Vec::new();
    let time = |stage: &str, start: Instant, timings: &mut Vec<StageTiming>| {
        timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
    };

    let start = Instant::now();
    let (manifest, load_warnings) = load_manifest(&cfg.manifest, cfg.strict)?;
    let manifest_hash = sha256_hex_file(&cfg.manifest)?;
    let stats = corpus_stats(&manifest);
    warnings.extend(load_warnings);
    time("ingest", start, &mut timings);

    let (store, provider_id) = match (&cfg.provider.baseline, &cfg.provider.import) {
        (Some(baseline), None) => {
            let features_dir = cfg.out_dir.join("features");
            let start = Instant::now();
            let feat = extract_features_stage(&manifest, &cfg.features, &features_dir, cfg.strict)?;
            warnings.extend(feat.warnings);
            time("features", start, &mut timings);

            let embed_dir = cfg.out_dir.join("embeddings");
            let start = Instant::now();
            let emb = baseline_embed_stage(
                &manifest,
                &features_dir,
                baseline,
                &embed_dir,
                cfg.features.frame_length_ms,
            )?;
            warnings.extend(emb.warnings);
            time("embed", start, &mut timings);

            let start = Instant::now();
            let (store, import_warnings) = import_embeddings(&embed_dir, &manifest)?;
            warnings.extend(import_warnings);
            time("load-embeddings", start, &mut timings);
            let provider_id = format!(
                "{BASELINE_PROVIDER_ID} dim={} stack={} stride={} seed={}",
                baseline.out_dim, baseline.stack, baseline.stride, baseline.seed
            );
            (store, provider_id)
        }
        (None, Some(import)) => {
            let start = Instant::now();
            let (store, import_warnings) = import_embeddings(&import.dir, &manifest)?;
            warnings.extend(import_warnings);
            time("load-embeddings", start, &mut timings);
            let provider_id = format!("import:{}", import.dir.display());
            (store, provider_id)
        }
        _ => {
            cfg.validate()?;
            unreachable!("validate rejects ambiguous providers");
        }
    };

    if store.is_empty() {
        return Err(Error::Pipeline(
            "no embeddings available for any utterance".to_string(),
        ));
    }
    let store = if cfg.normalize {
        normalize_store(store, &mut warnings)?
    } else {
        store
    };

    let start = Instant::now();
    let (matrix, pairs) = recall_matrix(&store, &manifest, &cfg.retrieval)?;
    if pairs.is_empty() {
        return Err(Error::Pipeline("zero usable site pairs".to_string()));
    }
    time("retrieval", start, &mut timings);

    let start = Instant::now();
    let report_dir = cfg.out_dir.join("report");
    std::fs::create_dir_all(&report_dir).map_err(|e| Error::io(&report_dir, e))?;
    let provenance = ReportProvenance::new(&manifest_hash, &provider_id, cfg.normalize)
        .with_config_hash(cfg.config_hash());
    let csv = render_csv(&matrix, &provenance);
    let md = render_markdown(&matrix, &provenance);
    let csv_path = report_dir.join("recall_matrix.csv");
    std::fs::write(&csv_path, &csv).map_err(|e| Error::io(&csv_path, e))?;
    let md_path = report_dir.join("recall_matrix.md");
    std::fs::write(&md_path, &md).map_err(|e| Error::io(&md_path, e))?;
    let pairs_path = report_dir.join("pairs.jsonl");
    let mut pairs_file = String::new();
    for pair in &pairs {
        pairs_file.push_str(&serde_json::to_string(pair).expect("pair serializes"));
        pairs_file.push('\n');
    }
    std::fs::write(&pairs_path, &pairs_file).map_err(|e| Error::io(&pairs_path, e))?;
    time("report", start, &mut timings);

    let report = EvalReport {
        config: cfg.clone(),
        config_hash: cfg.config_hash(),
        manifest_hash,
        provider_id,
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        corpus: stats,
        subgroups: matrix.subgroups.iter().map(|sg| sg.label().to_string()).collect(),
        cells: matrix
            .cells
            .iter()
            .map(|((src, tgt), cell)| CellReport {
                source: src.label().to_string(),
                target: tgt.label().to_string(),
                mean_recall: cell.mean_recall,
                n_pairs: cell.n_pairs,
            })
            .collect(),
        skipped_pairs: matrix.skipped.clone(),
        artifacts: ReportArtifacts {
            recall_matrix_csv: "report/recall_matrix.csv".to_string(),
            recall_matrix_md: "report/recall_matrix.md".to_string(),
            pairs_jsonl: "report/pairs.jsonl".to_string(),
        },
        warnings,
        timings,
    };
    let report_path = report_dir.join("report.json");
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )
    .map_err(|e| Error::io(&report_path, e))?;

    Ok(RunOutput {
        report,
        matrix,
        pairs,
    })
}

/// Execute the full pipeline. `workers > 0` pins the thread count (1 gives a
/// fully serial run); 0 uses all available cores.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    if cfg.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Pipeline(format!("thread pool: {e}")))?;
        pool.install(|| run_stages(cfg))
    } else {
        run_stages(cfg)
    }
}
