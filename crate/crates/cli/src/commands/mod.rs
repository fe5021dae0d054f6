//! Subcommand implementations. Every command logs its resolved
//! configuration to standard error and writes machine-readable outputs
//! only to files.

mod build_pdm;
mod evaluate;
mod gen;
mod predict;
mod register;
mod train;

pub use build_pdm::build_pdm;
pub use evaluate::evaluate;
pub use gen::gen_synthetic;
pub use predict::{infer_architecture, predict};
pub use register::register;
pub use train::train;

use crate::config::PipelineConfig;

pub(crate) fn log_config(command: &str, config: &PipelineConfig) {
    eprintln!("[{command}] resolved configuration:");
    for line in config.describe().lines() {
        eprintln!("[{command}]   {line}");
    }
}
