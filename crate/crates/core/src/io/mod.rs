//! Readers and writers for point clouds (PLY), depth maps (PFM) and camera
//! descriptions (TOML key/value text).

mod camera_file;
mod pfm;
mod ply;

pub use camera_file::{camera_to_string, parse_camera, read_camera, write_camera};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};
pub use ply::{decode_ply, encode_ply, read_ply, write_ply, PlyFormat};

use thiserror::Error;

use crate::camera::CameraError;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("header declares {expected} records but {found} are present")]
    CountMismatch { expected: usize, found: usize },
    #[error("unsupported property: {0}")]
    UnsupportedProperty(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("color PFM (\"PF\") is not a depth map; expected \"Pf\"")]
    WrongChannelCount,
    #[error("point {0} is invalid; only fully valid clouds can be written")]
    InvalidPoint(usize),
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("bad shape for `{0}`")]
    BadShape(String),
    #[error("camera rotation is not orthonormal (error {0:.3e})")]
    NonOrthonormalRotation(f64),
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error(transparent)]
    Camera(CameraError),
}

impl From<CameraError> for FormatError {
    fn from(e: CameraError) -> Self {
        match e {
            CameraError::NonOrthonormalRotation(err) => FormatError::NonOrthonormalRotation(err),
            other => FormatError::Camera(other),
        }
    }
}
