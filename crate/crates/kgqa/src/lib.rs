//! Command line tools and the HTTP session service.

pub mod backends;
pub mod commands;
pub mod config;
pub mod server;
