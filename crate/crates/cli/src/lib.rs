//! Command-line front end: configuration resolution, dispatch and file output.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{resolve, Command, Flags, Format, Model, RunConfig, OUTPUT_DIR_ENV};
pub use error::CliError;
pub use run::run;
