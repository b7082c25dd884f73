use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Structural problems found while decoding a PAPT tensor file.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes {0:?}, expected \"PAPT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown dtype code {0}")]
    BadDtype(u32),
    #[error("rank {0} exceeds the supported maximum")]
    BadRank(u32),
    #[error("extents overflow the addressable element count")]
    ExtentOverflow,
    #[error("truncated {section}: expected {expected} bytes, found {found}")]
    Truncated {
        section: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed tensor file: {0}")]
    Format(#[from] FormatError),
    #[error("non-finite value at element {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch: {what} (expected {expected:?}, got {got:?})")]
    Shape {
        what: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },
    #[error("training diverged at step {step} (loss {loss})")]
    Diverged {
        step: usize,
        loss: f64,
        trace: Vec<f64>,
    },
    #[error("non-finite gradient at iteration {iteration}")]
    Iteration { iteration: usize, losses: Vec<f64> },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("outside the domain of {0}")]
    Domain(&'static str),
    #[error("no convergence after {iters} iterations (gradient norm {grad_norm:e})")]
    NoConvergence { iters: usize, grad_norm: f64 },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad caller input rather than a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. } | Error::Shape { .. } | Error::Domain(_) | Error::Degenerate(_)
        )
    }
}
