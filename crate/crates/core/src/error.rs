use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("random regular graph generation failed after {0} attempts")]
    GenerationFailed(usize),
    #[error("malformed graph file: {0}")]
    Parse(String),
    #[error("vertex {0} out of range")]
    VertexOutOfRange(usize),
    #[error("geometric precondition failed: {0}")]
    Geometry(String),
    #[error("unsupported structure: {0}")]
    Unsupported(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("grid does not bracket the crossing: {0}")]
    NoBracket(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
