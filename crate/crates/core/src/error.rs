use std::path::PathBuf;

use crate::model::TowerId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{what}: not found ({})", path.display())]
    NotFound { what: &'static str, path: PathBuf },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("frame {index}: image decode/encode failed: {source}")]
    Image {
        index: usize,
        #[source]
        source: image::ImageError,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("frame {index}: image file missing ({})", path.display())]
    MissingFrame { index: usize, path: PathBuf },

    #[error("timestamps: row {index} has frame_index {found}")]
    FrameIndex { index: usize, found: usize },

    #[error("timestamps: non-increasing at index {index}")]
    NonIncreasingTimestamp { index: usize },

    #[error("count mismatch: {frames} frame files but {timestamps} timestamp rows")]
    CountMismatch { frames: usize, timestamps: usize },

    #[error("frame {index}: size {found:?} differs from {expected:?}")]
    FrameSize {
        index: usize,
        expected: (u32, u32),
        found: (u32, u32),
    },

    #[error("empty frame sequence")]
    EmptySequence,

    #[error("unsupported schema_version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("segmentation: {0}")]
    Segmentation(String),

    #[error("labels ({tower}): {reason}")]
    Labels { tower: TowerId, reason: String },

    #[error("labels: {0}")]
    LabelSet(String),

    #[error("config: {0}")]
    Config(String),

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch { left: (u32, u32), right: (u32, u32) },

    #[error("roi {roi:?} outside {width}x{height} frame")]
    RoiOutOfBounds {
        roi: crate::model::Roi,
        width: u32,
        height: u32,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("signal of length {len} is shorter than required {needed}")]
    SignalTooShort { len: usize, needed: usize },

    #[error("scene script: {0}")]
    Script(String),

    #[error("metrics: {0}")]
    Metrics(String),
}

impl Error {
    /// Short machine-readable category, stable across releases.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotFound { .. } => "not_found",
            Error::Io { .. } => "io",
            Error::Image { .. } => "image",
            Error::Csv { .. } => "csv",
            Error::Json { .. } => "json",
            Error::MissingFrame { .. } => "missing_frame",
            Error::FrameIndex { .. } => "frame_index",
            Error::NonIncreasingTimestamp { .. } => "non_increasing_timestamp",
            Error::CountMismatch { .. } => "count_mismatch",
            Error::FrameSize { .. } => "frame_size",
            Error::EmptySequence => "empty_sequence",
            Error::SchemaVersion { .. } => "schema_version",
            Error::Segmentation(_) => "segmentation",
            Error::Labels { .. } | Error::LabelSet(_) => "labels",
            Error::Config(_) => "config",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::RoiOutOfBounds { .. } => "roi_out_of_bounds",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::SignalTooShort { .. } => "signal_too_short",
            Error::Script(_) => "script",
            Error::Metrics(_) => "metrics",
        }
    }

    /// True for errors caused by bad input rather than by the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }

    /// Frame index the error refers to, when there is one.
    pub fn index(&self) -> Option<usize> {
        match self {
            Error::MissingFrame { index, .. }
            | Error::FrameIndex { index, .. }
            | Error::NonIncreasingTimestamp { index }
            | Error::FrameSize { index, .. }
            | Error::Image { index, .. } => Some(*index),
            _ => None,
        }
    }
}
