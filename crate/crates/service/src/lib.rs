//! HTTP service and command line front end for the rogue-variable engine.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    EpisodeLog(#[from] rogue_core::memory::MemoryError),
    #[error("cannot bind port {port}: {source}")]
    Bind { port: u16, source: std::io::Error },
    #[error("server failed: {0}")]
    Io(std::io::Error),
}
