use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("size mismatch: expected {expected:?}, got {got:?}")]
    SizeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("invalid depth value {0} (must be finite and > 0)")]
    InvalidDepth(f64),

    #[error("normals are required for order-1 relations")]
    MissingNormals,

    #[error("no jointly valid pixel to evaluate")]
    NoValidPixels,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("ground-truth edge set is empty")]
    EmptyGroundTruth,

    #[error("loss is non-finite over {pixels} valid pixels")]
    NonFiniteLoss { pixels: usize },

    #[error("scene is not closed: ray through pixel {pixel:?} escapes")]
    SceneNotClosed { pixel: (usize, usize) },

    #[error("unknown scene `{0}`")]
    UnknownScene(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
