//! Core algorithms for direct 3D biventricular shape prediction.
//!
//! The crate is `no_std` (allocation only) and holds the pure computational
//! pieces of the pipeline: triangle-mesh geometry, Procrustes alignment,
//! the PCA point distribution model, coherent point drift registration,
//! image/metadata preprocessing, a small deterministic neural-network
//! engine with the mode-weighted parameter loss, surface metrics, and a
//! synthetic phantom cohort used as ground truth. File formats, the CLI,
//! and parallel orchestration live in the companion `ventric` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod align;
pub mod cpd;
pub mod fmath;
pub mod mesh;
pub mod metrics;
pub mod net;
pub mod nn;
pub mod pdm;
pub mod phantom;
pub mod preprocess;
pub mod rng;

pub use nalgebra;
