//! The `mathqa` command line pipeline and annotation service.

pub mod artifacts;
pub mod cli;
mod commands;
pub mod config;
pub mod server;

pub use artifacts::{Layout, Outcome, ProviderCalls};
pub use cli::{run, AppError};
pub use config::{derive_seed, AppConfig, Overrides};
pub use server::{router, ServerState, ServiceHandle};
