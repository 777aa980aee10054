//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors produced by quantization, calibration and inference.
#[derive(Debug, Error)]
pub enum Error {
    /// Input tensor is empty, non-finite, or otherwise outside an
    /// operation's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Dimensions of the involved tensors or parameter vectors disagree.
    #[error("shape mismatch: {0}")]
    ShapeError(String),

    /// A smoothing scale was zero or negative.
    #[error("non-positive smoothing scale at channel {channel}: {value}")]
    NonPositiveScale { channel: usize, value: f64 },

    /// The integer accumulation could exceed the 64-bit accumulator.
    #[error("integer accumulator could overflow: {0}")]
    OverflowRisk(String),

    /// Calibration was asked to run on an empty prompt set.
    #[error("calibration set is empty")]
    EmptyCalibrationSet,

    /// Schedule step count disagrees with the partition or table.
    #[error("step count mismatch: {0}")]
    StepCountMismatch(String),

    /// A step index fell outside the calibrated range `[0, t)`.
    #[error("step {step} out of range [0, {total})")]
    StepOutOfRange { step: usize, total: usize },

    /// A layer id is not known to the statistics or the table.
    #[error("unknown layer: {0}")]
    UnknownLayer(String),

    /// A quantizable layer of the model is missing from the table.
    #[error("table is missing layer: {0}")]
    MissingLayer(String),

    /// Requested time-range partition cannot be formed.
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    /// Model configuration violates its invariants.
    #[error("invalid model config: {0}")]
    InvalidConfig(String),

    /// Table partition disagrees with the per-layer parameter sets.
    #[error("partition mismatch: {0}")]
    PartitionMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
