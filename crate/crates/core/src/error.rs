use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("point depth {0} is not in front of the camera")]
    NonPositiveDepth(f64),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("invariant violated by primitive {index}: {reason}")]
    InvariantViolation { index: usize, reason: String },

    #[error("depth tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),

    #[error("warp loss needs at least one view pair")]
    EmptyPairSet,

    #[error("voxel size must be positive, got {0}")]
    NonPositiveVoxelSize(f64),

    #[error("voxel fusion weights have not been computed")]
    WeightsUnset,

    #[error("confidence map has no finite values")]
    EmptyMask,

    #[error("loss component `{0}` is not finite")]
    NonFiniteComponent(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
