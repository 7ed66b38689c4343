//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("data length {actual} does not match shape {shape:?} (expected {expected})")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("expected a rank-{expected} tensor, got shape {shape:?}")]
    RankMismatch { expected: usize, shape: Vec<usize> },

    #[error("negative standard deviation {sigma}")]
    NegativeSigma { sigma: f64 },

    #[error("pad {pad} is smaller than the largest signal extent {extent}")]
    PadTooSmall { pad: usize, extent: usize },

    #[error("spectrum is already centered")]
    AlreadyCentered,

    #[error("spectrum is not centered")]
    NotCentered,

    #[error("layer {layer}: expected input shape {expected:?}, got {actual:?}")]
    LayerShape {
        layer: usize,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("label {label} out of range for {num_classes} classes (example {index})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("forward cache is stale: model parameters changed since it was built")]
    StaleCache,

    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("no test images are correctly classified on clean inputs; nothing to sweep")]
    NoCorrectImages,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("target class {class} equals the true class")]
    SameClass { class: usize },

    #[error(
        "attack precondition failed: clean image predicted as {predicted}, expected {expected}"
    )]
    NotCleanCorrect { predicted: usize, expected: usize },

    #[error("non-finite objective value at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("image too small: need at least {min}x{min} pixels, got {height}x{width}")]
    ImageTooSmall {
        min: usize,
        height: usize,
        width: usize,
    },

    #[error("unknown reference filter `{0}`")]
    UnknownFilter(String),

    #[error("magnitude grid is all zero; metric undefined")]
    ZeroGrid,

    #[error("grid contains negative values")]
    NegativeGrid,

    #[error("kernel list is empty or shapes are inconsistent: {0}")]
    BadKernelList(String),

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: String },

    #[error("payload size mismatch: expected {expected} values, got {actual}")]
    PayloadSize { expected: usize, actual: usize },

    #[error("file size {size} is not a multiple of the {record}-byte record size")]
    RecordSize { size: usize, record: usize },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
