use std::fmt;

use pmloss_core::synthetic::SceneError;
use pmloss_core::{AlignError, CameraError, FormatError, IndexError, LossError, MetricsError};

/// Error carrying its process exit code.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

pub const IO: u8 = 2;
pub const SHAPE: u8 = 3;
pub const NUMERIC: u8 = 4;

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn code(&self) -> u8 {
        self.code
    }

    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(IO, e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        Self::new(IO, e.to_string())
    }
}

impl From<CameraError> for CliError {
    fn from(e: CameraError) -> Self {
        let code = match e {
            CameraError::DimensionMismatch { .. }
            | CameraError::MixedResolution { .. }
            | CameraError::EmptyImage => SHAPE,
            CameraError::InvalidIntrinsics(_) | CameraError::NonOrthonormalRotation(_) => IO,
        };
        Self::new(code, e.to_string())
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        Self::new(SHAPE, e.to_string())
    }
}

impl From<AlignError> for CliError {
    fn from(e: AlignError) -> Self {
        let code = match e {
            AlignError::TooFewPairs(_)
            | AlignError::DegenerateGeometry(_)
            | AlignError::NonPositiveScale(_)
            | AlignError::Geometry(_) => NUMERIC,
            AlignError::LengthMismatch { .. }
            | AlignError::InvalidParameter(_)
            | AlignError::Index(_) => SHAPE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<LossError> for CliError {
    fn from(e: LossError) -> Self {
        match e {
            LossError::Alignment(a) => a.into(),
            LossError::NonFinite(_) => Self::new(NUMERIC, e.to_string()),
            _ => Self::new(SHAPE, e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        Self::new(SHAPE, e.to_string())
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Format(f) => f.into(),
            SceneError::Camera(c) => c.into(),
            SceneError::Io(i) => i.into(),
            SceneError::Loss(l) => l.into(),
            SceneError::Metrics(m) => m.into(),
            SceneError::InvalidSpec(_) | SceneError::Layout(_) => Self::new(IO, e.to_string()),
        }
    }
}
