use thiserror::Error;

use crate::tensor::Geometry;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry mismatch: expected {expected}, got {actual}")]
    GeometryMismatch { expected: Geometry, actual: Geometry },

    #[error("unknown noise schedule `{0}`")]
    UnknownSchedule(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("unknown backend `{0}`")]
    UnknownBackend(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pixel value {value} outside the declared range [-1, 1]")]
    RangeViolation { value: f64 },

    #[error("watermark radius {radius} too large for a {height}x{width} latent")]
    RadiusTooLarge { radius: usize, height: usize, width: usize },

    #[error("channel {channel} out of range for {channels} latent channels")]
    ChannelOutOfRange { channel: i64, channels: usize },

    #[error("invalid key: {0}")]
    InvalidKey(String),

    #[error("imaginary residue {residue:e} after inverse transform exceeds {limit:e}")]
    ImaginaryResidue { residue: f64, limit: f64 },

    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("quality target {target} unreachable even with the original image ({achieved})")]
    UnreachableQuality { target: f64, achieved: f64 },

    #[error("metric failure: {0}")]
    Metric(String),

    #[error("mask is empty")]
    EmptyMask,

    #[error("degenerate observation: estimated variance is zero")]
    DegenerateVariance,

    #[error("series did not converge within {0} terms")]
    NonConvergence(usize),

    #[error("unknown attack `{0}`")]
    UnknownAttack(String),

    #[error("attack `{0}` requires an adapter that is not installed")]
    AdapterAbsent(String),

    #[error("attack pipeline failed at stage {index} (`{name}`): {source}")]
    PipelineStage {
        index: usize,
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error("empty record set")]
    EmptyRecords,

    #[error("image codec error: {0}")]
    Codec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
