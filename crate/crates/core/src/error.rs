use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("noiseless regime: {0} is not defined for sigma2 = 0 (use the single-measurement decimal decoder)")]
    Noiseless(&'static str),

    #[error("search budget exceeded: {candidates} candidates > budget {budget}; use a larger machine or a smaller instance")]
    BudgetExceeded { candidates: u128, budget: u128 },

    #[error("invalid bracket: success rate {rate} at m_hi = {m_hi} is below threshold {threshold}")]
    InvalidBracket { m_hi: usize, rate: f64, threshold: f64 },

    #[error("allocation of {rows}x{cols} matrix failed")]
    Allocation { rows: usize, cols: usize },

    #[error("malformed dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BudgetExceeded { .. } => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
