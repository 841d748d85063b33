use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sequence")]
    EmptySequence,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate box (non-positive area) where a valid box is required")]
    DegenerateBox,

    #[error("{what} must satisfy {constraint}, got {value}")]
    InvalidArgument {
        what: &'static str,
        constraint: &'static str,
        value: String,
    },

    #[error("sequence {sequence}: missing annotation file {path}")]
    MissingAnnotation { sequence: String, path: PathBuf },

    #[error("sequence {sequence}: {images} image files but {lines} annotation lines")]
    AnnotationCountMismatch {
        sequence: String,
        images: usize,
        lines: usize,
    },

    #[error("sequence {sequence}: malformed annotation at line {line}: {reason}")]
    MalformedAnnotation {
        sequence: String,
        line: usize,
        reason: String,
    },

    #[error("no video in the dataset is long enough for an episode of length {t}")]
    NoEpisodeSource { t: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("tabular environment too large to enumerate: {states} states exceed {limit}")]
    SizeGuard { states: u128, limit: u128 },

    #[error("non-finite loss at step {step}: {details}")]
    NonFiniteLoss { step: u64, details: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config key `{key}`: {reason}")]
    ConfigValue { key: String, reason: String },

    #[error("config file {path}: line {line} is not `key=value`")]
    ConfigSyntax { path: PathBuf, line: usize },

    #[error("wrong crop resolution: expected {expected}, got {got}")]
    WrongResolution { expected: usize, got: usize },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
