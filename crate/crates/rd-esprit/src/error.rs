//! Error taxonomy shared by every module.

use thiserror::Error;

/// All failure modes of the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape or index inconsistency.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A singular-value (or eigenvalue) gap needed by a perturbation weight is
    /// numerically zero, so the downstream quantity is undefined.
    #[error("degenerate gap: {0}")]
    DegenerateGap(String),

    /// A least-squares subproblem lost rank.
    #[error("ill-posed: {0}")]
    IllPosed(String),

    /// Requested operation is defined only for a subset of configurations
    /// (e.g. structured least squares is one-dimensional only).
    #[error("unsupported variant: {0}")]
    UnsupportedVariant(String),

    /// Invalid scenario, noise, or sweep configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Column-phase alignment has no well-defined answer because an estimated
    /// column is (numerically) orthogonal to its reference.
    #[error("alignment undefined: estimated column {column} is orthogonal to its reference")]
    AlignmentUndefined { column: usize },

    /// Underlying I/O failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Config file could not be parsed.
    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
}
