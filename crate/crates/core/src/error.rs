use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("instance too large: {size} selections exceeds cap {cap}")]
    InstanceTooLarge { size: u128, cap: u128 },

    #[error("value {0} cannot be encoded (must lie in (0, 0.25])")]
    NotEncodable(f64),

    #[error("budget {budget} exceeds total rate capacity {capacity}")]
    BudgetExhaustsRates { budget: u64, capacity: u64 },

    #[error("mu is undefined: no try-out had a positive true marginal gain")]
    UndefinedMu,

    #[error("oracle contract violated: {0}")]
    ContractViolation(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
