//! Error types shared across the toolkit.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by parsing, validation, matching and compositing.
#[derive(Debug, Error)]
pub enum Error {
    /// The annotation file is not valid JSON.
    #[error("JSON parse error at byte offset {offset} (line {line}, column {column}): {message}")]
    Json {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    /// A reference between dataset records does not resolve.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// An annotation carries a bounding box that cannot host or donate a foreground.
    #[error("annotation {annotation_id} rejected: {reason}")]
    InvalidAnnotation { annotation_id: u64, reason: String },

    /// A caller-supplied argument is out of range or inconsistent.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A loaded image does not match the dimensions recorded in the annotations.
    #[error("image {image_id}: file is {actual_width}x{actual_height} but the record says {expected_width}x{expected_height}")]
    DimensionMismatch {
        image_id: u64,
        expected_width: u32,
        expected_height: u32,
        actual_width: u32,
        actual_height: u32,
    },

    /// A category id or name does not exist in the dataset.
    #[error("unknown category: {0}")]
    UnknownCategory(String),

    /// A slot rectangle collapsed to zero pixels after rounding.
    #[error("substitution failed for slot {slot_instance_id}: {reason}")]
    Substitution {
        slot_instance_id: u64,
        reason: String,
    },

    /// Filesystem failure, with the offending path when known.
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Image decode/encode failure.
    #[error("image codec error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }
}
