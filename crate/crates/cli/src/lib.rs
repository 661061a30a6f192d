//! Configuration, file formats, self-checks and the benchmark runner behind
//! the `dcac` binary.

pub mod bench;
pub mod checks;
pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod stats;

pub use cli::run;
