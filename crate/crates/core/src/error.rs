use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("eigensolver did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("Stieltjes transform evaluated on a pole at z = {0}")]
    Pole(f64),

    #[error("invalid correlation: |C[{row}][{col}]| = {value} exceeds 1")]
    InvalidCorrelation { row: usize, col: usize, value: f64 },

    #[error("singular matrix: {which}")]
    Singular { which: &'static str },

    #[error("QP solver failed to converge (KKT residual {residual:.3e})")]
    Solver { residual: f64 },

    #[error("non-finite activation in layer `{layer}`")]
    NonFinite { layer: String },

    #[error("degenerate variance for asset {0}")]
    DegenerateVariance(String),

    #[error("insufficient history: need {required} rows, have {available}")]
    InsufficientHistory { required: usize, available: usize },

    #[error("no symbols left after cleaning")]
    EmptyPanel,

    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("weights file version mismatch: found {found:?}")]
    Version { found: String },

    #[error("weights file checksum mismatch")]
    Checksum,

    #[error("estimator failed at window {window}: {source}")]
    Window {
        window: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by bad arguments or malformed input files,
    /// as opposed to numerical breakdowns.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::InvalidInput(_)
                | Error::UnknownSymbol(_)
                | Error::Parse { .. }
                | Error::Version { .. }
                | Error::Checksum
                | Error::Io { .. }
                | Error::Csv(_)
                | Error::Json(_)
                | Error::InsufficientHistory { .. }
                | Error::EmptyPanel
        )
    }
}
