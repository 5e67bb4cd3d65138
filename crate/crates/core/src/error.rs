use thiserror::Error;

/// Errors produced by the kernels, sampler, oracle, estimators and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("index {index} outside [{lo}, {hi}]")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },

    #[error("{what} is empty")]
    Empty { what: &'static str },

    #[error("batch of {paths} x {steps} exceeds memory budget of {budget_bytes} bytes")]
    ResourceLimit {
        paths: usize,
        steps: usize,
        budget_bytes: usize,
    },

    #[error("enumeration budget exceeded at step {step}: {atoms} atoms > {budget}")]
    BudgetExceeded {
        step: usize,
        atoms: usize,
        budget: usize,
    },

    #[error("enumeration length {n} exceeds the cap of {max} steps")]
    EnumerationTooLong { n: usize, max: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("at n = {n}: {source}")]
    AtGridPoint {
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    /// True for the enumeration and memory budget family.
    pub fn is_budget(&self) -> bool {
        match self {
            Error::BudgetExceeded { .. }
            | Error::EnumerationTooLong { .. }
            | Error::ResourceLimit { .. } => true,
            Error::AtGridPoint { source, .. } => source.is_budget(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
