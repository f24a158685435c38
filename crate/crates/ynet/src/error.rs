use dan_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum YnetError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("adjacency has a negative entry {value} at flat index {index}")]
    NegativeEntry { index: usize, value: f64 },

    #[error("{what}: expected shape {expected:?}, got {got:?}")]
    ShapeMismatch {
        what: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("temporal length exhausted at block {block}: {remaining} steps left, dilation {dilation} needs more")]
    TemporalUnderflow {
        block: usize,
        remaining: usize,
        dilation: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("loss became non-finite at step {step}")]
    DivergedLoss { step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, YnetError>;

pub(crate) fn shape_mismatch(what: &'static str, expected: &[usize], got: &[usize]) -> YnetError {
    YnetError::ShapeMismatch {
        what,
        expected: expected.to_vec(),
        got: got.to_vec(),
    }
}
