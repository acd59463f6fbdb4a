//! Workspace-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("duplicate utterance ({site}, {sentence}): lines {first_line} and {second_line}")]
    DuplicateUtterance {
        site: String,
        sentence: u32,
        first_line: usize,
        second_line: usize,
    },

    #[error("unknown site id `{site}`")]
    UnknownSite { site: String },

    #[error("missing audio file: {path}")]
    MissingAudio { path: PathBuf },

    #[error("wav decode: {path}: {msg}")]
    WavFormat { path: PathBuf, msg: String },

    #[error("sample rate {got} Hz, expected {expected} Hz (strict mode rejects resampling)")]
    SampleRate { expected: u32, got: u32 },

    #[error("embedding file {path}: {msg}")]
    EmbeddingFormat { path: PathBuf, msg: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("empty embedding sequence: {context}")]
    EmptySequence { context: String },

    #[error("no aligned sentences between `{source_site}` and `{target_site}`")]
    EmptyAlignedSet {
        source_site: String,
        target_site: String,
    },

    #[error("empty reference: character error rate is undefined")]
    EmptyReference,

    #[error("reference/hypothesis length mismatch: {refs} references vs {hyps} hypotheses")]
    LengthMismatch { refs: usize, hyps: usize },

    #[error("mapping table {path}:{line}: {msg}")]
    MappingTable {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Pipeline(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for input/validation problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ManifestParse { .. }
            | Error::DuplicateUtterance { .. }
            | Error::UnknownSite { .. }
            | Error::MissingAudio { .. }
            | Error::SampleRate { .. }
            | Error::DimensionMismatch { .. }
            | Error::EmptySequence { .. }
            | Error::EmptyAlignedSet { .. }
            | Error::EmptyReference
            | Error::LengthMismatch { .. }
            | Error::MappingTable { .. }
            | Error::WavFormat { .. }
            | Error::EmbeddingFormat { .. }
            | Error::Config(_) => 1,
            Error::Io { .. } | Error::Pipeline(_) => 2,
        }
    }
}
