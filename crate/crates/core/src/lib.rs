//! LSTM language models whose input and forget gates are trained through a
//! binary-concrete (Gumbel-sigmoid) relaxation, so that learned gates sit
//! close to 0 or 1.
//!
//! - [`sampling`]: counter-based RNG, logistic noise, binary-concrete and
//!   Gumbel-softmax samplers, tail-bound verification.
//! - [`cell`] and [`network`]: the gated cell in three gate modes, a stacked
//!   language model with truncated BPTT, evaluation.
//! - [`train`]: SGD / Adam, global-norm clipping, the training loop.
//! - [`compress`]: round, round-and-clip and rank-k truncation of the gate
//!   parameters, with paired before/after perplexity.
//! - [`analysis`]: gate histograms, per-token gate traces, gradient checking.
//! - [`cli`]: the `g2lstm` command-line tool.
//!
//! Everything is f64 and deterministic: the same seed gives the same bits.

pub mod analysis;
pub mod cell;
pub mod checkpoint;
pub mod cli;
pub mod compress;
pub mod corpus;
pub mod error;
pub mod linalg;
pub mod network;
pub mod sampling;
pub mod train;

pub use error::{Error, Result};
