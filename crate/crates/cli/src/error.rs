use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown experiment `{0}`; expected one of stencil, euler, quadrature, chidenn, stfem, sca")]
    UnknownExperiment(String),
    #[error("invalid config key `{key}`: {detail}")]
    Config { key: String, detail: String },
    #[error("cannot parse config {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: dldc_core::Error,
    },
    #[error("cannot serialise {what}: {detail}")]
    Serialize { what: String, detail: String },
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}

pub(crate) fn core(context: impl Into<String>) -> impl FnOnce(dldc_core::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Core { context, source }
}
