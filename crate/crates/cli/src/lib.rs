//! Library surface of the command-line tool, exposed so integration tests
//! and the experiment harness can drive the same code paths as the binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;

pub use error::AppError;
