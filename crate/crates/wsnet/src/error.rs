use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what} at {path}: {detail}")]
    Format {
        what: &'static str,
        path: PathBuf,
        detail: String,
    },

    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    #[error("character {0:?} is not in the charset")]
    OutOfCharset(char),

    #[error("charset is empty")]
    EmptyCharset,

    #[error("unknown writer style identifier {wsi} (table has {known} writers)")]
    UnknownWriter { wsi: usize, known: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("transcript of length {transcript_len} needs at least {required} frames, got {frames}")]
    Unalignable {
        transcript_len: usize,
        required: usize,
        frames: usize,
    },

    #[error("conditioned network requires a writer style identifier")]
    MissingWsi,

    #[error("adaptation line set is empty")]
    EmptyAdaptationSet,

    #[error("contrastive batch has no positive pair")]
    NoPositivePair,

    #[error("aggregation needs at least 2 embeddings, got {0}")]
    TooFewEmbeddings(usize),

    #[error("CER reduction is undefined for a zero baseline CER")]
    ZeroBaselineCer,

    #[error("training diverged at iteration {iter}: {detail}")]
    Diverged { iter: usize, detail: String },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable one-word category used by the CLI for machine-parsable exits.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::ArtifactMismatch(_) => "artifact",
            Error::OutOfCharset(_) | Error::EmptyCharset => "charset",
            Error::UnknownWriter { .. } | Error::MissingWsi => "writer",
            Error::DimensionMismatch(_) => "shape",
            Error::Unalignable { .. } => "ctc",
            Error::EmptyAdaptationSet
            | Error::NoPositivePair
            | Error::TooFewEmbeddings(_)
            | Error::ZeroBaselineCer => "data",
            Error::Diverged { .. } => "diverged",
            Error::Invalid(_) => "invalid",
        }
    }
}
