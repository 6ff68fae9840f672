use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HsError>;

/// Errors raised by the fusion toolkit.
#[derive(Debug, Error)]
pub enum HsError {
    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: String, got: String },

    #[error("{what} ({height}x{width}) is not divisible by factor {factor}")]
    Indivisible {
        what: &'static str,
        height: usize,
        width: usize,
        factor: usize,
    },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid spectral response: {0}")]
    InvalidSrf(String),

    #[error("inverse DFT has imaginary residual {residual:e}; input is not conjugate-symmetric")]
    SymmetryViolation { residual: f64 },

    #[error("unsupported operator structure for the fast solver: {0}")]
    UnsupportedStructure(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad magic bytes, not a cube file")]
    BadMagic { path: PathBuf },

    #[error("{path}: truncated payload (expected {expected} bytes, found {found})")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{path}: {extra} bytes of trailing data after payload")]
    TrailingData { path: PathBuf, extra: u64 },

    #[error("{path}: unknown dtype {dtype:?}")]
    UnknownDtype { path: PathBuf, dtype: String },

    #[error("{path}: malformed header: {reason}")]
    Header { path: PathBuf, reason: String },

    #[error("{path}:{line}: {reason}")]
    Csv {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl HsError {
    pub(crate) fn mismatch(expected: impl ToString, got: impl ToString) -> Self {
        HsError::DimMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HsError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input values or shapes rather than
    /// I/O or numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            HsError::Dimension(_)
                | HsError::DimMismatch { .. }
                | HsError::Indivisible { .. }
                | HsError::NonFinite(_)
                | HsError::InvalidParameter(_)
                | HsError::InvalidSrf(_)
        )
    }

    /// True for errors raised while reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            HsError::Io { .. }
                | HsError::BadMagic { .. }
                | HsError::Truncated { .. }
                | HsError::TrailingData { .. }
                | HsError::UnknownDtype { .. }
                | HsError::Header { .. }
                | HsError::Csv { .. }
        )
    }
}
