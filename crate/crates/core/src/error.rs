use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("training diverged: {0}")]
    TrainingDiverged(String),
    #[error("unknown loss kind {0}")]
    UnknownLoss(String),
    #[error("model file has bad magic bytes")]
    BadMagic,
    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model file is truncated")]
    Truncated,
    #[error("model file contains a non-finite weight at index {0}")]
    NonFiniteWeight(usize),
    #[error("taps {taps:?} are not primitive for degree {degree} (period {period})")]
    InvalidTaps {
        degree: u32,
        taps: Vec<u32>,
        period: usize,
    },
    #[error("invalid LFSR spec: {0}")]
    InvalidLfsr(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("series too short: need more than {needed} samples, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("degenerate series: prediction variance vanished at lag {0}")]
    DegenerateSeries(usize),
    #[error("LLR calibration failed: {0}")]
    CalibrationFailed(String),
    #[error("chip power {0:.4} is not within 5% of unity")]
    PowerAssertion(f64),
    #[error("RRC span of {0} symbols is too short (minimum 4)")]
    SpanTooShort(usize),
    #[error("too few chips for noise estimation: need {needed}, got {got}")]
    TooFewChips { needed: usize, got: usize },
    #[error("payload of {got} bits does not fit the frame capacity of {capacity} bits")]
    PayloadTooLarge { got: usize, capacity: usize },
    #[error("parity-check matrix validation failed: {0}")]
    ParityCheck(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}
