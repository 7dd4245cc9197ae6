use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("no density at t = {0}: the distribution has an atom there")]
    AtAtom(f64),
    #[error("distribution has atoms; use the CDF split instead")]
    HasAtoms,
    #[error("divergent integral: {0}")]
    Divergent(String),
    #[error("unbounded support: {0}")]
    Unbounded(String),
    #[error("invalid `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("undecodable: virtual indices {blocking:?} cannot be resolved")]
    Undecodable { blocking: Vec<usize> },
    #[error("zero total mass")]
    ZeroMass,
    #[error("too large: {0}")]
    TooLarge(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument { name, reason: reason.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
