use std::path::PathBuf;

use thiserror::Error;

use crate::volume::GridShape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: GridShape, right: GridShape },

    #[error("spacing mismatch: {left:?} vs {right:?}")]
    SpacingMismatch { left: [f64; 3], right: [f64; 3] },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid voxel data: {0}")]
    InvalidData(String),

    #[error("mask has no foreground voxel")]
    EmptyMask,

    #[error("mask has no background voxel")]
    FullMask,

    #[error("grid {shape} exceeds the brute-force cap of {cap} voxels per axis")]
    GridTooLarge { shape: GridShape, cap: usize },

    #[error("degenerate lesion: d_min = {d_min} (must be < 0)")]
    DegenerateLesion { d_min: f64 },

    #[error("no voxel satisfies D <= {lambda}")]
    EmptyRoi { lambda: f64 },

    #[error("{path}: non-binary label, {count} offending voxels, values {values:?}")]
    NonBinaryLabel {
        path: PathBuf,
        values: Vec<f64>,
        count: usize,
    },

    #[error("{path}: unsupported datatype code {code}")]
    UnsupportedDatatype { path: PathBuf, code: i16 },

    #[error("{path}: corrupt header field `{field}`: {reason}")]
    CorruptHeader {
        path: PathBuf,
        field: &'static str,
        reason: String,
    },

    #[error("no roster sample has a non-empty lesion")]
    NoEligibleDonor,

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::SpacingMismatch { .. } => "SpacingMismatch",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::InvalidData(_) => "InvalidData",
            Error::EmptyMask => "EmptyMask",
            Error::FullMask => "FullMask",
            Error::GridTooLarge { .. } => "GridTooLarge",
            Error::DegenerateLesion { .. } => "DegenerateLesion",
            Error::EmptyRoi { .. } => "EmptyROI",
            Error::NonBinaryLabel { .. } => "NonBinaryLabel",
            Error::UnsupportedDatatype { .. } => "UnsupportedDatatype",
            Error::CorruptHeader { .. } => "CorruptHeader",
            Error::NoEligibleDonor => "NoEligibleDonor",
            Error::Config(_) => "ConfigError",
            Error::Io { .. } => "IoError",
            Error::Json { .. } => "JsonError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
