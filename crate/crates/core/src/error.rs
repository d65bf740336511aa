//! Crate error type.

use crate::cell::ValidationReport;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid cell: {0}")]
    InvalidCell(ValidationReport),

    #[error("malformed cell structure: {0}")]
    MalformedCell(String),

    #[error("unknown accelerator preset {0:?} (expected V1, V2 or V3)")]
    UnknownPreset(String),

    #[error("enumeration limits ({vertices}, {edges}) exceed the supported space (7, 9)")]
    LimitsTooLarge { vertices: usize, edges: usize },

    #[error("sample of {requested} unique cells exhausted the space after {attempts} attempts")]
    SampleExhausted { requested: usize, attempts: u64 },

    #[error("{path}:{line}: {msg}")]
    ParseLine {
        path: String,
        line: u64,
        msg: String,
    },

    #[error("record {hash}: stored hash does not match recomputed hash {computed}")]
    HashMismatch { hash: String, computed: String },

    #[error("results file missing column {0:?}")]
    MissingColumn(String),

    #[error("results header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch { expected: String, found: String },

    #[error("cell {hash} has no result row for accelerator {accel}")]
    MissingAccelRow { hash: String, accel: String },

    #[error("correlation inputs must be equal-length with at least 2 non-constant values: {0}")]
    DegenerateCorrelation(String),

    #[error("target values are degenerate (zero variance); nothing to learn")]
    DegenerateTargets,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("feature width mismatch: {0}")]
    WidthMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("checkpoint is inconsistent: {0}")]
    BadCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
