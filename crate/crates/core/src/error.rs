use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid offset: {0}")]
    InvalidOffset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} is limited to n <= {cap}, got n = {n}")]
    CapExceeded { what: &'static str, n: usize, cap: usize },

    #[error("{0} requires unit costs")]
    NonUnitCost(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("strategy error: {0}")]
    Strategy(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("enumeration budget exceeded: about {estimate:.3e} candidates, budget is {budget}")]
    BudgetExceeded { estimate: f64, budget: u64 },
}

impl Error {
    /// True for errors caused by exhausting the enumeration budget.
    pub fn is_budget(&self) -> bool {
        matches!(self, Error::BudgetExceeded { .. })
    }
}
