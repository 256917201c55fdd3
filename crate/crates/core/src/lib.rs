//! Allocation-only building blocks for mobility data fusion.
//!
//! The crate turns raw GPS traces into stay points, annotates them with
//! activity types, reconstructs full-day activity chains with a small
//! trainable slot classifier, adapts the classifier to demographic groups,
//! places activities in zones and scores every stage with distributional
//! metrics. Nothing here touches the filesystem or the network; the
//! `mobfuse` crate carries IO, file formats and the command line.
//!
//! Enable the `std` feature for faster math and runtime SIMD detection in
//! the matrix kernels.
#![no_std]
// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod activity;
pub mod adapter;
pub mod annotate;
pub mod eval;
pub mod infer;
pub mod location;
pub mod math;
pub mod recon;
pub mod rng;
pub mod staypoint;
pub mod synth;

pub use activity::{
    Activity, ActivityChain, ActivityCode, AgeBand, DemographicGroup, Employment, Sex, Slot,
    SlotGrid, NUM_ACTIVITY_TYPES, SLOTS_PER_DAY, SLOT_MINUTES,
};
