//! Phase-field mask synthesis for inverse lithography.
//!
//! The crate evaluates the Hopkins aerial image through a truncated
//! sum-of-coherent-systems expansion, builds a regularized objective on a
//! `[0, 1]`-valued mask variable and minimizes it by projected steepest
//! descent under a continuation schedule.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod fft;
pub mod forward;
pub mod functionals;
pub mod gradients;
pub mod optics;
pub mod optimizer;
pub mod stencil;
pub mod workbench;

pub use error::{IltError, Result};
