//! Error types shared across the crate.

use thiserror::Error;

/// A single dataset-validation violation. Violations are data, not panics:
/// validation collects every failed rule with enough context to locate the
/// offending record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Short rule name, e.g. `"y>n"` or `"orphan county"`.
    pub rule: String,
    /// Human-readable locator and detail.
    pub detail: String,
}

impl Violation {
    pub fn new(rule: impl Into<String>, detail: impl Into<String>) -> Self {
        Self { rule: rule.into(), detail: detail.into() }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.rule, self.detail)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("Wishart degrees of freedom {df} too small for dimension {dim} (need df > dim - 1)")]
    DegreesOfFreedomTooSmall { df: f64, dim: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("no informative cells for this block; no likelihood information")]
    SingularInformation,

    #[error("combined precision is singular; prior and likelihood jointly leave directions unconstrained")]
    SingularCombinedPrecision,

    #[error("unknown county id {0}")]
    UnknownCounty(u64),

    #[error("unknown stratum id {0}")]
    UnknownStratum(u64),

    #[error("unmapped county id {0} (no state membership)")]
    UnmappedCounty(u64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dataset failed validation with {} violation(s); first: {}", .0.len(), .0[0])]
    Validation(Vec<Violation>),

    #[error("no records in input")]
    NoRecords,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
