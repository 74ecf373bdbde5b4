//! Contextually sparse linear models.
//!
//! A feedforward network maps contextual features `z` to a dense coefficient
//! vector `eta(z)`; a projection layer shrinks the batch of coefficient
//! vectors onto an l1 ball of average radius `lambda`, which makes the
//! coefficients sparse in a way that varies with context. Predictions are
//! `x' beta(z)` (plus an unpenalized intercept), passed through a logit link
//! for classification.
//!
//! Modules:
//!
//! - [`projection`]: l1, group-l1 and sign-constrained projection kernels with
//!   their backward passes, plus inference soft-thresholding.
//! - [`network`]: the coefficient network, forward and reverse-mode passes.
//! - [`training`]: losses, Adam with early stopping, the lambda path and the
//!   relaxed fit.
//! - [`data`]: standardization, the synthetic generator, splits, table I/O.
//! - [`metrics`]: relative loss, sparsity, selection F1, Hamming instability.
//! - [`cli`]: command-line front end and the model archive format.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod network;
pub mod projection;
pub mod training;

pub use error::{Error, Result};
