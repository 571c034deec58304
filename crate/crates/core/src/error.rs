use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the set where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Inconsistent solver, barrier or estimator configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Problem data failed a structural or sampled growth check.
    #[error("validation error: {0}")]
    Validation(String),

    /// The requested time lies at or before the finite-time blow-up of the solution.
    #[error("time {t} is not after the blow-up time {blowup_time}")]
    BlowUp { t: f64, blowup_time: f64 },

    #[error("estimation error: {0}")]
    Estimation(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
