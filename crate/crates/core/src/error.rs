use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("domain error in {op}: {value}")]
    Domain { op: &'static str, value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("backward already ran on this graph")]
    BackwardTwice,

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("closed gap undefined: oracle mAP equals source mAP ({0})")]
    UndefinedGap(f64),

    #[error("non-finite loss: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
