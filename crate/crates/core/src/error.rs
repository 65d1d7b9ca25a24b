//! Error type shared by every module of the crate.

use thiserror::Error;

use crate::elliptic::FullField;
use crate::evolution::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("strip is empty: no node lies within distance r of the boundary")]
    NoStripNodes,
    #[error("interior is empty (pass allow_empty_interior to accept this)")]
    EmptyInterior,
    #[error("spacing h = {h} does not tile side {axis} of length {length}")]
    BadSpacing { h: f64, axis: usize, length: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular kernel evaluated at the origin")]
    SingularAtOrigin,
    #[error("kernel support contains no node pair")]
    EmptySupport,
    #[error("interior system is singular (isolated interior node?)")]
    SingularSystem,
    #[error("solver did not converge in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Option<Box<FullField>>,
    },
    #[error("exponent p = {0} is not > 1")]
    NonConvexExponent(f64),
    #[error(
        "Picard iteration failed to contract after {iterations} iterations; shrink the window"
    )]
    NoContraction { iterations: usize, last_change: f64 },
    #[error("interior block of the Laplacian is singular")]
    SingularInterior,
    #[error("need at least two strip nodes")]
    TooFewStripNodes,
    #[error("field is not mean-zero (mean {mean:.3e})")]
    NotMeanZero { mean: f64 },
    #[error("field is constant")]
    ConstantField,
    #[error("bump of radius {radius} contains no strip node")]
    EmptyBump { radius: f64 },
    #[error("non-positive sample in decay fit")]
    NonPositiveData,
    #[error("fit window holds {count} samples, need at least 10")]
    WindowTooSmall { count: usize },
    #[error("series must contain at least two finite points")]
    EmptySeries,
    #[error("invalid config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("evolution aborted at t = {}: {source}", partial.times.last().copied().unwrap_or(0.0))]
    Aborted {
        partial: Box<Trajectory>,
        source: Box<Error>,
    },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Coarse error class, mapped to process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Solver,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Solver => 3,
            ErrorCategory::Io => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Solver => "solver",
            ErrorCategory::Io => "io",
        }
    }
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::ConfigInvalid { .. }
            | Error::NoStripNodes
            | Error::EmptyInterior
            | Error::BadSpacing { .. }
            | Error::InvalidArgument(_)
            | Error::NonConvexExponent(_)
            | Error::TooFewStripNodes
            | Error::EmptyBump { .. } => ErrorCategory::Config,
            Error::Io(_) | Error::Parse(_) => ErrorCategory::Io,
            Error::Aborted { source, .. } => source.category(),
            _ => ErrorCategory::Solver,
        }
    }
}
