use alloc::string::String;

/// Errors produced by the estimators and constructors in this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown group `{0}`")]
    UnknownGroup(String),

    #[error("endpoint tolerance not met (mismatch {mismatch:e})")]
    SolverFailed { mismatch: f64 },

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("point is characteristic (|horizontal gradient| = {norm:e})")]
    Characteristic { norm: f64 },

    #[error("gradient vanishes at the point")]
    SingularGradient,

    #[error("point is off the level set (|f - t| = {residual:e})")]
    OffLevelSet { residual: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
