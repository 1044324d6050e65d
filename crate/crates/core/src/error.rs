use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions {width}x{height} for buffer of length {len}")]
    Dimensions {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("image is empty")]
    EmptyImage,
    #[error("grid too fine: tile {tile_w}x{tile_h} is smaller than 8x8")]
    GridTooFine { tile_w: usize, tile_h: usize },
    #[error("no bright field found")]
    NoBrightField,
    #[error("no content rows survive")]
    NoContentRows,
    #[error("no content columns survive")]
    NoContentColumns,
    #[error("no seeds")]
    NoSeeds,
    #[error("degenerate box {w}x{h}")]
    DegenerateBox { w: usize, h: usize },
    #[error("box ({x},{y},{w},{h}) lies outside {width}x{height} image")]
    BoxOutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("empty class: {0}")]
    EmptyClass(String),
    #[error("length mismatch: {0} ground-truth labels vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("no ground-truth samples in any class")]
    NoSamples,
    #[error("need at least 3 images to split, got {0}")]
    TooFewImages(usize),
    #[error("fractions must be non-negative and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("no images")]
    NoImages,
    #[error("cannot place cell {index}: density too high")]
    CannotPlace { index: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed manifest JSON: {0}")]
    ManifestJson(#[source] serde_json::Error),
    #[error("unsupported manifest format {0:?}")]
    ManifestFormat(String),
    #[error("duplicate image id {0:?}")]
    DuplicateImageId(String),
    #[error("image {image_id:?} cell {cell}: box ({x},{y},{w},{h}) outside {width}x{height}")]
    CellOutOfBounds {
        image_id: String,
        cell: usize,
        x: i64,
        y: i64,
        w: i64,
        h: i64,
        width: usize,
        height: usize,
    },
    #[error("image {image_id:?} cell {cell}: unknown label {label:?}")]
    UnknownLabel {
        image_id: String,
        cell: usize,
        label: String,
    },
    #[error("unknown label {0:?}")]
    UnknownLabelName(String),
    #[error("model file: {0}")]
    Model(String),
    #[error("image decode failed: {0}")]
    Decode(#[source] image::ImageError),
    #[error("image encode failed: {0}")]
    Encode(#[source] image::ImageError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
