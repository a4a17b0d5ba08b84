use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point ({x}, {y}) lies outside the {width}x{height} image")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("input of {height}x{width} is not divisible by {divisor}; pad to {padded_height}x{padded_width}")]
    IndivisibleInput {
        width: usize,
        height: usize,
        divisor: usize,
        padded_width: usize,
        padded_height: usize,
    },

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("skeleton is not thin: 2x2 block at ({x}, {y})")]
    NotThin { x: usize, y: usize },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("image `{path}`: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
