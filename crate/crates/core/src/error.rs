use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite evaluation at coordinate {coord}")]
    Evaluation { coord: usize },
    #[error("lanczos did not converge in {iterations} iterations (best ritz value {best_ritz})")]
    Convergence { iterations: usize, best_ritz: f64 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("capability not available: {0}")]
    Capability(String),
    #[error("noise outside regime: {0}")]
    Regime(String),
    #[error("point outside domain: {0}")]
    Domain(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("sample budget exceeded: {0}")]
    Budget(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
