//! Cross-dialect speech retrieval evaluation toolkit.
//!
//! Given a corpus of parallel utterances across dialect survey sites, this
//! crate measures how semantically aligned a set of speech embeddings is:
//! every source-site sentence retrieves its best match at a target site by
//! sequence similarity, and top-1 recall is aggregated into a
//! subgroup-by-subgroup matrix. An ASR scoring path (Chinese text
//! normalization plus character error rate) rides along, sharing the corpus
//! model.
//!
//! The crates are organized around the data flow:
//!
//! - [`corpus`]: manifest model, validation, alignment keys
//! - [`features`]: WAV decoding and log-mel filterbank extraction
//! - [`embed`]: embedding sequences, binary storage, providers
//! - [`seqsim`]: the frame-level similarity (naive and blocked paths)
//! - [`retrieval`]: the retrieval protocol and recall aggregation
//! - [`report`]: CSV/markdown rendering with provenance headers
//! - [`textnorm`]: Chinese normalization and character error rate
//! - [`synth`]: deterministic synthetic corpora for calibration
//! - [`pipeline`]: end-to-end runs with caching and reproducible reports

pub mod corpus;
pub mod embed;
pub mod error;
pub mod features;
pub mod hash;
pub mod pipeline;
pub mod report;
pub mod retrieval;
pub mod seqsim;
pub mod synth;
pub mod textnorm;

pub use corpus::{
    aligned_sentence_ids, corpus_stats, load_manifest, save_manifest, CorpusStats, Manifest, Site,
    Subgroup, Utterance,
};
pub use embed::{
    baseline_encode, import_embeddings, l2_normalize, BaselineConfig, EmbeddingSequence,
    EmbeddingStore,
};
pub use error::{Error, Result};
pub use features::{compute_fbank, decode_wav, AudioBuffer, FbankConfig, FeatureMatrix};
pub use pipeline::{run_pipeline, EvalReport, RunConfig, RunOutput};
pub use retrieval::{
    recall_matrix, retrieve_pair, PairRetrievalResult, RecallMatrix, RetrievalPolicy,
};
pub use seqsim::{seqsim_batch, seqsim_fast, seqsim_naive, SeqSimScore};
pub use synth::{make_synthetic_corpus, SynthConfig, SynthMode};
pub use textnorm::{cer, corpus_cer, normalize_text, NormalizationConfig, TokenSequence};
