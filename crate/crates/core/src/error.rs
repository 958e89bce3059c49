use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("feature vector has zero norm (<= 1e-12)")]
    ZeroNormFeature,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("residual distribution is degenerate (q == p everywhere)")]
    DegenerateResidual,

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("token {token} is outside the vocabulary of size {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },

    #[error("position {pos} is outside the {side}x{side} grid")]
    PositionOutOfRange { pos: usize, side: usize },

    #[error("tabular model has no row for context window {0:?}")]
    UnknownWindow(Vec<i64>),

    #[error("enumeration of {vocab}^{len} sequences exceeds the 1e6 guard")]
    TooLarge { vocab: usize, len: usize },

    #[error("tree level {level} asks for {width} candidates but the vocabulary has {vocab}")]
    VocabExhausted { level: usize, width: usize, vocab: usize },

    #[error("accepted nodes do not form a root-to-node path")]
    NotAPath,

    #[error("row range {start}..{end} is outside the {side}-row grid")]
    RowOutOfRange { start: usize, end: usize, side: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported format_version {0} (expected 1)")]
    UnsupportedVersion(i64),

    #[error("unknown decoding mode '{0}'")]
    UnknownMode(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
