use thiserror::Error;

/// Errors raised by the simulator and the bound evaluators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The communication graph violates a structural requirement.
    #[error("topology violation: {0}")]
    Topology(String),

    /// Inputs were supplied in the wrong shape or order.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// The model assumptions needed by an operation do not hold.
    #[error("model violation: {0}")]
    Model(String),

    /// An internal invariant failed during simulation.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// A trace or input sequence is incomplete.
    #[error("invalid input: {0}")]
    Input(String),

    /// A special-function argument is outside the domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A zeta exponent at or below 1, where the series diverges.
    #[error("series diverges for exponent {0}")]
    Divergence(f64),

    #[error("agent index {index} out of range for {n} agents")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

impl Error {
    pub fn with_context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Topology(m) => Error::Topology(format!("{ctx}: {m}")),
            Error::Protocol(m) => Error::Protocol(format!("{ctx}: {m}")),
            Error::Model(m) => Error::Model(format!("{ctx}: {m}")),
            Error::Invariant(m) => Error::Invariant(format!("{ctx}: {m}")),
            Error::Input(m) => Error::Input(format!("{ctx}: {m}")),
            Error::Domain(m) => Error::Domain(format!("{ctx}: {m}")),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
