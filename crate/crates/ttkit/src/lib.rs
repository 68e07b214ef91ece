//! Tensor Train matrix kernels for compressed linear layers.
//!
//! The crate provides, from the ground up:
//!
//! - [`tensor`]: dense row-major matrices and tensors with a one-sided
//!   Jacobi thin SVD (no external linear-algebra dependency).
//! - [`tt`]: the TT-matrix format, sequential TT-SVD with a rank cap,
//!   reconstruction, rounding, and parameter counting.
//! - [`linops`]: linear-layer forwards in dense, low-rank two-factor, and
//!   TT parametrizations, plus the analytic flop model for all three.
//! - [`lstm`]: an LSTM cell whose gate kernel can be any of the three
//!   parametrizations.
//! - [`train`]: hand-derived reverse-mode gradients for every kernel
//!   variant, Adam with a halving learning-rate schedule, and a synthetic
//!   sequence-copy task for desk-scale training runs.
//! - [`io`]: the TTK1/TTM1 binary formats and JSON fixture mirrors.

#![allow(clippy::needless_range_loop)]

pub mod io;
pub mod linops;
pub mod lstm;
pub mod tensor;
pub mod train;
pub mod tt;
