use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the domain where the model is defined.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The requested process does not exist for these parameters.
    #[error("process does not exist: {0}")]
    Existence(String),

    /// Two operands cannot be combined (dimension mismatch, diverging
    /// convolution, incompatible grids).
    #[error("incompatible operands: {0}")]
    Incompatible(String),

    /// A well-posed computation failed to produce a value.
    #[error("evaluation failed: {0}")]
    Evaluation(String),

    /// Malformed run configuration.
    #[error("configuration error: {0}")]
    Config(String),
}
