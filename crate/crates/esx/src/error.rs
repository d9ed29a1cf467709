//! Error type shared by the whole toolkit.

use std::path::PathBuf;

/// Errors surfaced by the evaluation, simulation, and orchestration layers.
///
/// Property violations found by the checkers (envelope reports, containment
/// verdicts, ...) are data, not errors; this enum covers genuinely invalid
/// inputs and I/O failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A cost function returned NaN or an infinity for a finite query point.
    #[error("cost `{label}` returned a non-finite value at x = {x}")]
    EvalDomain { label: String, x: f64 },

    /// An argument violated a documented precondition.
    #[error("invalid argument `{what}`: {detail}")]
    InvalidArgument { what: &'static str, detail: String },

    /// Bisection was asked to work on a bracket without a sign change.
    /// This signals that the attractor may be a set rather than a point;
    /// use a sign scan instead of a root in that case.
    #[error("b1_half has no sign change over [{lo}, {hi}]; the attractor may be a set, not a point")]
    NoSignChange { lo: f64, hi: f64 },

    /// A configuration field referenced something unknown or inconsistent.
    #[error("configuration error in `{field}`: {detail}")]
    Config { field: String, detail: String },

    /// A scenario file could not be parsed.
    #[error("cannot parse `{path}`: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
