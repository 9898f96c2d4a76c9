use thiserror::Error;

/// Everything that can go wrong in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("norm volume unavailable: {0}")]
    NormVolumeUnavailable(String),
    #[error("F_psi vanishes on the whole grid")]
    FPsiVanishes,
    #[error("divergence assumption violated: {0}")]
    DivergenceViolated(String),
    #[error("exact measure requires sup norm")]
    ExactMeasureRequiresSup,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("budget exceeded: need {required}, limit {limit}")]
    BudgetExceeded { required: u128, limit: u128 },
    #[error("out of domain: {0}")]
    Domain(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("precision: {0}")]
    Precision(String),
}

impl Error {
    /// True for errors that only say "this would take too long".
    pub fn is_budget(&self) -> bool {
        matches!(self, Error::BudgetExceeded { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
