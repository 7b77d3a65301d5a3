use thiserror::Error;

/// Errors raised anywhere in the discovery engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("variable {0} is not recorded on this tape")]
    NotOnTape(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance matrix is singular after jitter {jitter:e}; inputs are duplicated or degenerate")]
    SingularCovariance { jitter: f64 },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("layer {0} would lose its last connection")]
    LayerFullyPruned(usize),

    #[error("symbolic readout produced {0} terms (limit {1})")]
    TermExplosion(usize, usize),

    #[error("rank variance is zero; correlation undefined")]
    ZeroRankVariance,

    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },

    #[error("checksum mismatch for {0}")]
    Checksum(String),

    #[error("config invalid: {0}")]
    Config(String),

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
