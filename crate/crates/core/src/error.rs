use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("truncation too large: dimension {dim} exceeds cap {cap}")]
    TruncationTooLarge { dim: usize, cap: usize },

    #[error("eigensolver failed after {iterations} iterations: {detail}")]
    SolverFailure { iterations: usize, detail: String },

    #[error("cannot track state {label} at coupling scale s = {s:.6} (best overlap {overlap:.4})")]
    Labeling { label: String, s: f64, overlap: f64 },

    #[error("label {0} is not present in the labeled system")]
    MissingLabel(String),

    #[error("normal equations are singular; unidentifiable parameters: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
