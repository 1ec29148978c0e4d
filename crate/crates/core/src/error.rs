use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty support")]
    EmptySupport,

    #[error("zero column at index {0}")]
    ZeroColumn(usize),

    #[error("degenerate support: least-squares system on blocks {0:?} has no unique solution")]
    DegenerateSupport(Vec<usize>),

    #[error("combinatorial budget exceeded: C({blocks}, {order}) = {count} supports, budget {budget}")]
    BudgetExceeded {
        blocks: usize,
        order: usize,
        count: u128,
        budget: u64,
    },

    #[error("condition violated: {0}")]
    ConditionViolated(String),

    #[error("parameter t = {t} outside {family} regime [{lo}, {hi})")]
    OutsideRegime {
        family: &'static str,
        t: f64,
        lo: f64,
        hi: f64,
    },

    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BudgetExceeded { .. } => 3,
            Error::Io(_) | Error::Csv(_) => 1,
            _ => 2,
        }
    }
}
