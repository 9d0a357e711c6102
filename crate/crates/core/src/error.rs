use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid body model: {0}")]
    Model(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value at parameter index {index}: {context}")]
    Numerical { index: usize, context: String },

    #[error("point behind camera (depth {depth:.3e} m)")]
    BehindCamera { depth: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("unsupported schema version `{found}` (expected `{expected}`)")]
    UnsupportedVersion { found: String, expected: String },

    #[error("unknown keypoint convention `{0}`")]
    UnknownConvention(String),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("model hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error("package verification failed: {0}")]
    Package(String),

    #[error("no usable tracks: {0}")]
    NoTracks(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-friendly name of the error kind.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Model(_) => "model",
            Error::Input(_) => "input",
            Error::Config(_) => "config",
            Error::Numerical { .. } => "numerical",
            Error::BehindCamera { .. } => "behind-camera",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::UnsupportedVersion { .. } => "version",
            Error::UnknownConvention(_) => "convention",
            Error::Parse { .. } => "parse",
            Error::HashMismatch { .. } => "hash-mismatch",
            Error::Package(_) => "package",
            Error::NoTracks(_) => "no-tracks",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
