//! Command implementations behind the `draaseq` binary and the HTTP chat
//! service.

pub mod commands;
pub mod server;

pub type CliResult<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;
