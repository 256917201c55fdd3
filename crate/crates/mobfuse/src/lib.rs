//! File formats, stage drivers, the pipeline runner and the command line
//! for `mobfuse-core`.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod classifier;
pub mod config;
pub mod fixture;
pub mod io;
pub mod pipeline;
pub mod stages;

pub use mobfuse_core as core;
