use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("ill-conditioned patch (a = {a}, s = {s}, p = {p}): condition number {cond:.3e}")]
    IllConditioned { a: f64, s: usize, p: usize, cond: f64 },
    #[error("non-finite loss while perturbing parameter `{param}`[{index}]")]
    NonFinite { param: String, index: usize },
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error("under-determined problem: {0}")]
    UnderDetermined(String),
    #[error("empty input: {0}")]
    Empty(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
