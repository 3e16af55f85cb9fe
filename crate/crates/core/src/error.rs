use thiserror::Error;

/// Errors raised by the game model, solver and analytics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("user {user}: infeasible power budget ({reason})")]
    Infeasible { user: usize, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure in round {round} for user {user}: {detail}")]
    NumericalFailure {
        user: usize,
        round: usize,
        detail: String,
    },

    #[error("operation requires {expected} users, got {got}")]
    UnsupportedArity { expected: usize, got: usize },

    #[error("closed form outside its regime: {0}")]
    Regime(String),

    #[error("degenerate system: {0}")]
    Degenerate(String),

    #[error("search grid too large: {points:.3e} points exceeds limit {limit:.0e}")]
    GridTooLarge { points: f64, limit: f64 },

    #[error("no trials left to aggregate ({excluded} excluded)")]
    EmptySummary { excluded: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
