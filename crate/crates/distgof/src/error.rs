//! Error type shared across the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Structural problems with a dataset (shape mismatch, non-finite
    /// entries, empty sample).
    #[error("invalid dataset: {0}")]
    InvalidData(String),

    /// A family/link combination or parameter dimension that the library
    /// does not define.
    #[error("invalid family specification: {0}")]
    InvalidSpec(String),

    /// A response value outside the support of the assumed family.
    #[error("response {value} at row {row} is outside the support of {family}")]
    ResponseOutsideSupport {
        family: String,
        row: usize,
        value: f64,
    },

    /// The (expected) information matrix is numerically singular.
    #[error("rank-deficient problem: {0}")]
    RankDeficient(String),

    /// The likelihood is unbounded or the fit degenerates (e.g. zero
    /// residual variance in a Gaussian model).
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    /// Fisher scoring ran out of iterations. Carries the last iterate for
    /// diagnostics.
    #[error(
        "maximum likelihood fit did not converge after {iterations} iterations \
         (gradient norm {gradient_norm:.3e}, last iterate {last_iterate:?})"
    )]
    NotConverged {
        iterations: usize,
        gradient_norm: f64,
        last_iterate: Vec<f64>,
    },

    /// A linear predictor or likelihood term overflowed the double range.
    #[error("numeric range error: {0}")]
    NumericRange(String),

    /// The requested operation is not defined for the family (e.g. a
    /// closed-form characteristic function).
    #[error("operation `{operation}` is not supported for family {family}")]
    UnsupportedFamily { family: String, operation: String },

    /// Too many bootstrap replications failed to refit.
    #[error("{failed} of {total} bootstrap replications failed (allowed: {allowed})")]
    BootstrapFailures {
        failed: usize,
        total: usize,
        allowed: usize,
    },

    /// A simulation repetition could not produce a fittable sample within
    /// the retry budget.
    #[error("simulation study exceeded its retry budget: {0}")]
    StudyRetries(String),

    /// Lookup of a test kind that is absent from a report.
    #[error("test `{0}` is not present in the report")]
    UnknownTest(String),

    /// Invalid run configuration (bootstrap or study knobs).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A column referenced by a design recipe is missing from the file.
    #[error("column `{0}` not found in the CSV header")]
    MissingColumn(String),

    /// A cell failed to parse as a number.
    #[error("cannot parse `{value}` in column `{column}`, data row {row}")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
    },

    /// CSV-level failures (I/O or malformed records), tagged with the path.
    #[error("{path}: {message}")]
    Csv { path: String, message: String },

    /// Plain I/O failures, tagged with the path.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failures, tagged with the path.
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}
