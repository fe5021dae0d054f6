//! Pipeline orchestration around `ventric-core`: file formats, the static
//! configuration, dataset layout, subcommand implementations, and the
//! runtime oracle suite behind `ventric verify`.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod parallel;
pub mod verify;

pub use error::PipelineError;
