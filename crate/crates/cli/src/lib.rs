//! Library side of the `epi` command: argument definitions and the pipeline
//! stages, shared by the binary and the integration tests.

pub mod args;
pub mod error;
pub mod manifest;
pub mod stages;

pub use error::{CliError, Result};
