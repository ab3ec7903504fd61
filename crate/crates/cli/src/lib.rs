//! Command-line layer: file formats, provenance records and the
//! simulate / map / test / sweep commands.

pub mod commands;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod provenance;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
