//! Command implementations behind the `comformer` binary.

pub mod commands;
pub mod error;
pub mod experiments;
pub mod files;
pub mod verify;

pub use commands::{run, Cli};
pub use error::CliError;
