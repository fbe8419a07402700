use thiserror::Error;

/// Errors produced by the packing engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("arithmetic overflow in exact curvature arithmetic")]
    Overflow,

    #[error("not a Descartes quadruple (form = {form})")]
    NotDescartes { form: i128 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("reduction did not terminate within {0} flips")]
    ReductionFailed(usize),

    #[error("depth cap of {0} exceeded during enumeration")]
    DepthCapExceeded(u32),

    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("non-finite value in floating-point geometry")]
    Numeric,

    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
