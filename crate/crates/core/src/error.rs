use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point has non-positive depth z = {0}")]
    NonPositiveDepth(f64),
    #[error("invalid depth {0} (must be finite and > 0)")]
    InvalidDepth(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not a proper orthonormal matrix (max deviation {0:.3e})")]
    NonRigidPose(f64),
    #[error("patch size {patch} does not divide image size {width}x{height}")]
    IndivisibleResolution { width: u32, height: u32, patch: u32 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },
    #[error("depth map has no valid pixels")]
    EmptyDepth,
    #[error("ray direction is not unit length (norm {0})")]
    DegenerateDirection(f64),
    #[error("maximum displacement must be non-negative, got {0}")]
    NegativeScale(f64),
    #[error("smoothing neighborhood must be an odd perfect square, got {0}")]
    InvalidNeighborhood(u32),
    #[error("keypoint {0} has no valid source depth")]
    InvalidDepthAtKeypoint(char),
    #[error("marker center ({x}, {y}) lies outside the {width}x{height} image")]
    MarkerOutOfBounds { x: f64, y: f64, width: u32, height: u32 },
    #[error("scene has no analytic plane description")]
    NonPlanarScene,
    #[error("bad fetch-map magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported fetch-map version {0}")]
    UnsupportedVersion(u32),
    #[error("fetch-map file truncated: need {needed} bytes, have {actual}")]
    TruncatedFile { needed: usize, actual: usize },
    #[error("malformed fetch map: {0}")]
    MalformedFetchMap(String),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn mismatch(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
