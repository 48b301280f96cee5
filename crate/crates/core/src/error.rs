use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors across the pipeline.
///
/// `exit_class` groups variants into the CLI exit-code classes:
/// 2 = configuration, 3 = data/format, 4 = numeric failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("timestamp {t} outside trajectory span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{0}")]
    Data(String),

    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training diverged at step {step} (loss = {loss})")]
    Diverged { step: usize, loss: f64 },

    #[error("unselectable pixel ({x}, {y}): sub-volume is all zero")]
    UnselectablePixel { x: usize, y: usize },

    #[error("no overlapping valid pixels between estimate and ground truth")]
    EmptyOverlap,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// CLI exit-code class: 2 config, 3 data, 4 numeric.
    pub fn exit_class(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::NonFinite(_) | Error::Diverged { .. } => 4,
            _ => 3,
        }
    }
}
