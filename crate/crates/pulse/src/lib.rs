//! PULSE: non-stationary forecasting with phase-anchored disentanglement,
//! generative phase routing, and statistic-aware mixup.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: flat-`f64` tensors, a reverse-mode tape, a real DFT with
//!   adjoint, and a deterministic RNG.
//! - [`data`]: CSV ingestion, protocol splits and z-scoring, sliding-window
//!   batching, ACF period detection, and synthetic series.
//! - [`anchor`]: the phase-indexed codebook and timestamp encoder that
//!   produce the historical anchor and the lookup fallback.
//! - [`norm`]: residual-only reversible normalization and its inverses.
//! - [`model`]: the backbone interface (MLP and linear) and the fixed-token
//!   cross-attention phase router.
//! - [`sam`]: statistic-aware mixup plans, waveform mixing, and the naive
//!   re-estimation baseline.
//! - [`train`]: frequency-domain MAE, Adam, the training loop, and binary
//!   checkpoints.
//! - [`metrics`]: MSE/MAE/MASE and the history-future mismatch diagnostics.
//! - [`verify`]: executable checks of the gradient-sensitivity and
//!   mixup-stability claims plus the router complexity accounting.
//! - [`cli`]: the `pulse` batch command surface.
//!
//! Determinism is a contract everywhere: a fixed seed yields bitwise-equal
//! parameters, losses, and output files across runs.

// Numeric kernels index several buffers in lockstep; range loops read
// better than zipped iterators there.
#![allow(clippy::needless_range_loop)]

pub mod anchor;
pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod norm;
pub mod numerics;
pub mod sam;
pub mod train;
pub mod verify;

pub use error::{PulseError, Result};
pub use numerics::{DiffTensor, Rng, Tape, TensorId};
