use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-smooth point: {0}")]
    NonSmooth(String),
    #[error("layer {layer} is not invertible: {detail}")]
    Invertibility { layer: usize, detail: String },
    #[error("numeric inversion failed in layer {layer} after {iterations} iterations")]
    NumericInversion { layer: usize, iterations: usize },
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("capacity exceeded: {required} pieces required, cap is {cap}")]
    Capacity { required: usize, cap: usize },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("wrong flow family: {0}")]
    WrongFamily(String),
    #[error("wrong form: {0}")]
    WrongForm(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("proposal does not cover the integrand: {0}")]
    ProposalCoverage(String),
    #[error("insufficient grid coverage: tail mass {tail_mass:e}")]
    Coverage { tail_mass: f64 },
    #[error("numeric range: {0}")]
    NumericRange(String),
    #[error("unbounded: {0}")]
    Unbounded(String),
    #[error("schema error at {path}: {msg}")]
    Schema { path: String, msg: String },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
    pub(crate) fn hypothesis(msg: impl Into<String>) -> Self {
        Error::Hypothesis(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
