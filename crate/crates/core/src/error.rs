use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid coupling parameters: lambda={lambda}, L={len}, entry {entry} = {value}")]
    InvalidCouplingParameters {
        lambda: f64,
        len: usize,
        entry: usize,
        value: f64,
    },

    #[error("margin error: x={x} lacks the neighbouring columns needed")]
    Margin { x: i64 },

    #[error("horizon error: no pre-regeneration pattern within {cap} columns")]
    Horizon { cap: usize },

    #[error("budget error: {what} exhausted after {attempts} attempts")]
    Budget { what: &'static str, attempts: u64 },

    #[error("window exit at x={x} (range [{lo}, {hi}])")]
    WindowExit { x: i64, lo: i64, hi: i64 },

    #[error("window too small: exit mass {mass:e} after {k} steps")]
    WindowTooSmall { mass: f64, k: usize },

    #[error("precision budget: n0={n0} exceeds cap {cap}")]
    PrecisionBudget { n0: usize, cap: usize },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("inconsistent coupling state: {0}")]
    InconsistentState(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
