use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("singular covariance: {0}")]
    SingularCovariance(String),
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("non-finite residual at x = {x:?}")]
    Residual { x: Vec<f64> },
    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },
    #[error("boundary lift violates `{condition}` by {violation:e}")]
    LiftMismatch { condition: String, violation: f64 },
    #[error("reference solver failed: {0}")]
    Solver(String),
    #[error("ground truth has zero norm")]
    DegenerateTruth,
    #[error("config error: {0}")]
    Config(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status for this error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Divergence { .. } => 3,
            Error::Io(_) | Error::Format(_) => 4,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}
