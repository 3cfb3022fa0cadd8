use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("state index out of range: layer {layer}, label {label}, state {state}")]
    StateOutOfRange {
        layer: usize,
        label: usize,
        state: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid sequence {id}: {reason}")]
    InvalidSequence { id: String, reason: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("unknown label `{label}` for layer {layer}")]
    UnknownLabel { layer: usize, label: String },

    #[error("sequence {id}: frame {frame} is unlabeled")]
    Unlabeled { id: String, frame: usize },

    #[error("instance too large for enumeration: {paths} paths (limit {limit})")]
    InstanceTooLarge { paths: f64, limit: f64 },

    #[error("inference failure: {0}")]
    Numerical(String),

    #[error("non-finite objective during line search at iteration {iteration}")]
    NonFiniteObjective { iteration: usize, theta: Vec<f64> },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("point out of range: {0}")]
    OutOfRange(String),

    #[error("invalid track: {0}")]
    InvalidTrack(String),

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "invalid_spec",
            Error::StateOutOfRange { .. } => "state_out_of_range",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidSequence { .. } => "invalid_sequence",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::UnknownLabel { .. } => "unknown_label",
            Error::Unlabeled { .. } => "unlabeled",
            Error::InstanceTooLarge { .. } => "instance_too_large",
            Error::Numerical(_) => "numerical",
            Error::NonFiniteObjective { .. } => "non_finite_objective",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Calibration(_) => "calibration",
            Error::OutOfRange(_) => "out_of_range",
            Error::InvalidTrack(_) => "invalid_track",
            Error::Evaluation(_) => "evaluation",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
