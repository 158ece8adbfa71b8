//! Command line and HTTP front ends for `finq-core`.

pub mod cli;
pub mod server;
pub mod wire;
