//! Error types for every pipeline stage.

use thiserror::Error;

/// Errors raised while parsing the analyzed application source.
#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: construct outside the supported subset: {construct}")]
    SyntaxOutsideSubset { line: u32, construct: String },
    #[error("line {line}: malformed syntax: {detail}")]
    Malformed { line: u32, detail: String },
    #[error("line {line}: inconsistent indentation")]
    BadIndent { line: u32 },
    #[error("duplicate function definition `{name}` at line {line}")]
    DuplicateFunction { name: String, line: u32 },
}

/// Errors raised during dependency-graph construction.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("virtual physical variable `{0}` does not occur in the program")]
    PVarNotFound(String),
    #[error("no taint source found on any backward path")]
    NoSourceOnAnyPath,
    #[error("path enumeration exceeded {0} paths")]
    PathExplosion(usize),
}

/// Errors raised by the pruning stage.
#[derive(Debug, Error)]
pub enum SimplifyError {
    #[error("pruning policy would remove protected node `{label}` ({kind})")]
    PolicyViolation { label: String, kind: String },
}

/// Errors raised while loading telemetry channels, baselines, and event sequences.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}:{line}: schema error: {detail}")]
    SchemaError {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("{path}:{line}: non-monotone timestamp for `{variable}`")]
    NonMonotoneTimestamp {
        path: String,
        line: usize,
        variable: String,
    },
    #[error("{path}:{line}: duplicate record for `{variable}` at t={t}")]
    DuplicateRecord {
        path: String,
        line: usize,
        variable: String,
        t: i64,
    },
    #[error("{path}: row {row}: unknown event type `{ty}`")]
    UnknownEventType { path: String, row: usize, ty: String },
    #[error("{path}: row {row}: event ids must be strictly increasing")]
    NonIncreasingEventId { path: String, row: usize },
    #[error("ambiguous alignment for `{variable}` near t={t}: {count} candidates in one window")]
    AmbiguousAlignment { variable: String, t: i64, count: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Errors raised while fitting or applying deviation models.
#[derive(Debug, Error)]
pub enum DeviationError {
    #[error("insufficient baseline for `{variable}`: {n} samples, {min} required")]
    InsufficientBaseline { variable: String, n: usize, min: usize },
    #[error("type mismatch for `{variable}`: model is {expected}, value is {got}")]
    TypeMismatch {
        variable: String,
        expected: String,
        got: String,
    },
    #[error("no deviation model fitted for `{0}`")]
    NoModel(String),
}

/// Pipeline-level error wrapping a stage failure with the stage name.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("[parse] {0}")]
    Parse(#[from] ParseError),
    #[error("[graph] {0}")]
    Graph(#[from] GraphError),
    #[error("[prune] {0}")]
    Simplify(#[from] SimplifyError),
    #[error("[ingest] {0}")]
    Ingest(#[from] IngestError),
    #[error("[deviation] {0}")]
    Deviation(#[from] DeviationError),
    #[error("[config] {0}")]
    Config(String),
    #[error("[io] {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn io_err(path: impl Into<String>, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.into(),
        source,
    }
}
