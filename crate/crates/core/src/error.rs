use thiserror::Error;

/// Errors raised by the geometry, estimation and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("numerical domain violation: {what} (value {value:e})")]
    NumericalDomain { what: &'static str, value: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("resource limit exceeded: {what} (reached {reached}, achieved tolerance {achieved_tol:e})")]
    Resource {
        what: &'static str,
        reached: usize,
        achieved_tol: f64,
    },

    #[error("no feasible decay constant for k1 = {k1}")]
    Infeasible { k1: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
