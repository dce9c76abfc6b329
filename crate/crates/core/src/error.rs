use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or grid dimensions are incompatible with the requested operation.
    #[error("shape error in {op}: {msg}")]
    Shape { op: &'static str, msg: String },

    /// A scalar parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// A merge policy cannot be satisfied for the given token count.
    #[error("infeasible merge policy: {0}")]
    Policy(String),

    #[error("invalid config: {0}")]
    Config(String),

    /// A NaN reached an operation that refuses to mask it.
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("format error: {0}")]
    Format(String),

    /// Stored weights do not match the model config.
    #[error("load error: {0}")]
    Load(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Shape {
            op,
            msg: msg.into(),
        }
    }
}
