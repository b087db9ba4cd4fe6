use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("singular factorization: {0}")]
    Singular(String),
    #[error("eigensolver did not converge after {restarts} restarts (worst Ritz residual {worst_residual:.3e})")]
    NoConvergence { restarts: usize, worst_residual: f64, residuals: Vec<f64> },
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("level N={n}: {source}")]
    AtLevel { n: usize, source: Box<Error> },
}

impl Error {
    /// The innermost error, with level context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtLevel { source, .. } => source.root(),
            e => e,
        }
    }

    /// Whether the error stems from invalid configuration or arguments.
    pub fn is_config(&self) -> bool {
        matches!(self.root(), Error::Config(_) | Error::InvalidArgument(_) | Error::Unsupported(_) | Error::Parse(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
