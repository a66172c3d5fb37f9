use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("node {node}: {detail}")]
    NodeDimension { node: usize, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dictionary exhausted: requested {requested} columns but only {available} available")]
    DictionaryExhausted { requested: usize, available: usize },

    #[error("node {node}: effective channel is numerically rank deficient ({detail})")]
    RankDeficient { node: usize, detail: String },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("numerical consistency: imaginary residue {imag:e} on real part {real:e}")]
    Inconsistent { real: f64, imag: f64 },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
