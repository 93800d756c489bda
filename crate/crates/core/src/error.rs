use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the model.
    #[error("domain error: {0}")]
    Domain(String),

    /// A ratio whose denominator vanished (zero gain, zero coincidences).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("Kraus set is not complete: max |sum K^dag K - I| = {deviation:e}")]
    IncompleteKraus { deviation: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    /// The QBER never reaches the threshold inside the search range.
    #[error("no threshold crossing: {0}")]
    NoCrossing(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
