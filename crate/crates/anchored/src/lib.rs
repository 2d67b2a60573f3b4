//! Standard-library companion to `anchored-core`: PNG and PLY files, the
//! model-service HTTP client, configuration, the output-directory runner
//! and the `anchored` command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod http;
pub mod imageio;
pub mod ply;
pub mod runner;
pub mod wire;

pub use anchored_core as core;
pub use error::{Error, Result};
