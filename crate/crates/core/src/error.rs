use std::path::PathBuf;

/// Errors raised by every fallible operation in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed PFM: {0}")]
    Pfm(String),
    #[error("png encoding failed: {0}")]
    Png(String),
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("empty mask: no valid pixels for {0}")]
    EmptyMask(&'static str),
    #[error("energy diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },
    #[error("conjugate gradient stopped after {iterations} iterations at relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $err:expr) => {
        if !$cond {
            return Err($err);
        }
    };
}
pub(crate) use ensure;
