use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no price for token {token} on {date}")]
    MissingPrice { token: String, date: NaiveDate },

    #[error("pool {pool_id} has a zero reserve")]
    DeadPool { pool_id: String },

    #[error("invalid amount {0}")]
    InvalidAmount(f64),

    #[error("quote for pool {pool_id} was computed against different reserves")]
    StaleQuote { pool_id: String },

    #[error("unknown pool {0}")]
    UnknownPool(String),

    #[error("invalid pool {pool_id}: {reason}")]
    InvalidPool { pool_id: String, reason: String },

    #[error("graph has zero TVL")]
    DegenerateGraph,

    #[error("numeric solver failed on pool {pool_id} after {iterations} Newton steps (mu={mu:e}, decrement={decrement:e})")]
    SolverFailure {
        pool_id: String,
        iterations: usize,
        mu: f64,
        decrement: f64,
    },

    #[error("no route from {from} to {to} within {max_hops} hops")]
    NoRoute {
        from: String,
        to: String,
        max_hops: usize,
    },

    #[error("trace is empty")]
    EmptyTrace,

    #[error("token set is disconnected: no path from {from} to {to}")]
    Disconnected { from: String, to: String },

    #[error("power iteration did not converge in {iterations} iterations (last step {last_step:e})")]
    IterationLimit { iterations: usize, last_step: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("snapshot is empty: {0}")]
    EmptySnapshot(String),

    #[error("graph needs at least two tokens")]
    TooFewTokens,

    #[error("{0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
