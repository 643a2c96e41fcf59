use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or dimensions that cannot be combined.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Invalid solver or experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A generator parameter that cannot be honoured (e.g. an unreachable acceleration).
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("noise estimation error: {0}")]
    Estimation(String),

    #[error(
        "reconstruction diverged at iteration {iteration}: data residual {residual:.3e} exceeds \
         guard {threshold:.3e}"
    )]
    Diverged {
        iteration: usize,
        residual: f64,
        threshold: f64,
    },

    #[error("bad magic in {path}: expected KTEN0001")]
    BadMagic { path: PathBuf },

    #[error("unknown dtype {0:?} (expected \"c64\" or \"c128\")")]
    UnknownDtype(String),

    #[error("payload length mismatch: header implies {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("malformed KTEN header: {0}")]
    Header(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
