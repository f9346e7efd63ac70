use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("no height data inside footprint at ({x:.3}, {y:.3})")]
    NoData { x: f64, y: f64 },

    #[error("degenerate plane fit: {0}")]
    DegenerateFit(String),

    #[error("height map parse error at line {line}: {msg}")]
    MapParse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("planner not ready: no feasible plan from any solver yet")]
    NotReady,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} contains non-finite values")))
    }
}
