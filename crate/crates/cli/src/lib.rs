//! Command-line driver for the DLDC experiments: configuration, manifests and the registry.

pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod reproduce;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use experiments::{registry, run, Experiment};
pub use manifest::{Check, Manifest};
pub use reproduce::{reproduce_all, Summary};
