use thiserror::Error;

/// Errors raised by the denoiser and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dims(String),
    #[error("order {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("image {height}x{width} is smaller than patch size {patch_size}")]
    PatchSize {
        height: usize,
        width: usize,
        patch_size: usize,
    },
    #[error("global basis needs at least one training patch")]
    EmptyTrainingSet,
    #[error("group size {0} is odd; the alternating eigen-pair needs an even group")]
    OddGroup(usize),
    #[error("patch at ({row}, {col}) falls outside the {height}x{width} image")]
    Coord {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
