use thiserror::Error;

/// Errors raised by the lattice library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter violates the invariant of the type that owns it.
    #[error("invalid parameter `{name}`: {reason}")]
    Param { name: &'static str, reason: String },

    /// A requested table exceeds the configured size cap.
    #[error("size {requested} exceeds cap {cap}")]
    Size { requested: usize, cap: usize },

    /// An index lies outside the valid range.
    #[error("index {index} out of range 0..={max}")]
    Index { index: usize, max: usize },

    /// Not enough usable data points for a fit.
    #[error("insufficient data: need at least {needed} usable rows, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// A pricer failed at a specific step count inside a sweep.
    #[error("at N = {steps}: {source}")]
    AtSteps {
        steps: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Param {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
