use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("backward pass requested before any forward pass was recorded")]
    EmptyTape,

    #[error("tape node {0} does not belong to this tape")]
    UnknownNode(usize),

    #[error("non-finite gradient in network {network}, layer {layer}")]
    NonFiniteGradient { network: usize, layer: usize },

    #[error("non-finite parameter in network {network}, layer {layer} after optimizer step")]
    NonFiniteParameter { network: usize, layer: usize },

    #[error("time {t} is outside [0, 1]")]
    TimeOutOfRange { t: f64 },

    #[error("schedule derivative is singular at t = {t} (beta = {beta:e})")]
    Singular { t: f64, beta: f64 },

    #[error("derivative order {0} not supported (0..=3)")]
    BadOrder(usize),

    #[error("step from t = {t} by {step} overshoots t = 1")]
    StepOvershoot { t: f64, step: f64 },

    #[error("invalid dataset spec: {0}")]
    InvalidDataset(String),

    #[error("unknown dataset or experiment `{0}`")]
    UnknownDataset(String),

    #[error("invalid loss config: {0}")]
    InvalidLossConfig(String),

    #[error("{term} is enabled but its sub-batch is empty; adjust true_target_fraction (now {fraction})")]
    EmptySubBatch { term: &'static str, fraction: f64 },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("non-finite loss at step {step}: {breakdown}")]
    NonFiniteLoss { step: usize, breakdown: String },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
