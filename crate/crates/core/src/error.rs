//! Error types shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Failures while reading, validating or writing datasets.
#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("row {row}: feature dimension {found} does not match expected {expected}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: odometry decreases from {previous} to {current}")]
    NonMonotoneOdometry {
        row: usize,
        previous: f64,
        current: f64,
    },
    #[error("row {row}: non-finite value")]
    NonFinite { row: usize },
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
    #[error("feature file: {0}")]
    FeatureFile(String),
}

/// Invalid configuration values.
#[derive(Debug, Error, PartialEq)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

/// Matching-layer failures.
#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("query dimension {query} does not match reference dimension {reference}")]
    DimensionMismatch { query: usize, reference: usize },
    #[error("empty distance vector")]
    Empty,
    #[error("non-finite input")]
    NonFinite,
}

/// Statistic extraction failures.
#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("vector of length {0} is too short, at least 2 entries required")]
    TooShort(usize),
    #[error("non-finite entry at position {0}")]
    NonFinite(usize),
    #[error("bundle vectors Q and R differ in length ({query} vs {reference})")]
    BundleShape { query: usize, reference: usize },
}

/// Model construction, inference and training failures.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("input dimension {found} does not match model dimension {expected}")]
    InputDimension { expected: usize, found: usize },
    #[error("catalogue version {found} does not match model catalogue version {expected}")]
    CatalogueVersion { expected: u32, found: u32 },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("training data contains a single class (all labels = {0}); the loss weight has no effect and precision is undefined")]
    SingleClass(bool),
}

/// Model file (de)serialization failures.
#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported model file version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },
    #[error("checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// History-of-queries localization failures.
#[derive(Debug, Error, PartialEq)]
pub enum LocalizerError {
    #[error("history window is empty")]
    EmptyHistory,
    #[error("odometer regressed from {previous} to {current}")]
    OdometerRegression { previous: f64, current: f64 },
    #[error("match index {index} outside traverse of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid value: {0}")]
    InvalidValue(String),
}

/// Experiment harness failures.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no records to aggregate")]
    EmptyRecords,
    #[error(transparent)]
    Localizer(#[from] LocalizerError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
