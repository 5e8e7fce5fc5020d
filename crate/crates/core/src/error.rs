use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside its admissible range (grid point, alpha, exponent).
    #[error("domain error: {0}")]
    Domain(String),

    /// A map lost strict monotonicity at grid resolution.
    #[error("degenerate map: {0}")]
    DegenerateMap(String),

    /// Two maps with different grid sizes were combined.
    #[error("grid mismatch: {0} vs {1}")]
    GridMismatch(usize, usize),

    /// Malformed or insufficient input data.
    #[error("input error: {0}")]
    Input(String),

    /// Inconsistent configuration (missing reference measure, bad bounds).
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code contract: 2 for configuration problems,
    /// 3 for numeric degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::DegenerateMap(_) | Error::GridMismatch(_, _) => 3,
            _ => 2,
        }
    }
}
