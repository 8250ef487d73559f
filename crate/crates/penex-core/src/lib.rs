//! Numerical-optimization workbench for penalized exponential-loss training.
//!
//! The crate provides the pieces needed to train and study multi-class
//! classifiers under the PENEX objective (exponential loss plus a penalty on
//! the per-sample sum of exponentiated logits) next to standard baselines:
//!
//! - [`tape`]: a minimal dense-tensor engine with reverse-mode automatic
//!   differentiation (append-only tape, rank ≤ 2 tensors).
//! - [`losses`]: differentiable loss functions (EX, PENEX, cross-entropy,
//!   label smoothing, confidence penalty, focal, constrained-EX ablations)
//!   plus margin and inference transforms.
//! - [`penalty`]: the stateful adaptive-ρ controller (per-batch optimal
//!   estimate, EMA smoothing, clipping).
//! - [`model`] / [`optim`] / [`train`]: MLP and linear classifiers, SGD and
//!   Adam with gradient clipping, and the full training loop.
//! - [`data`]: synthetic dataset generators, label-noise injection, CSV
//!   ingestion, deterministic splits.
//! - [`metrics`]: accuracy, expected calibration error, Brier score, and
//!   evaluation cross-entropy with margin summaries.
//! - [`boost`]: multi-class AdaBoost (SAMME) over decision stumps.
//! - [`verify`]: independent numeric oracles for the theoretical claims the
//!   workbench is built around (Fisher consistency, margin bound, optimal
//!   penalty, weak-learner direction).
//!
//! Numeric kernels are generic over the scalar type through [`Scalar`];
//! concrete aliases for the two supported precisions live at the crate root.
//! Verification paths always run in `f64`.

pub mod boost;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod penalty;
pub mod scalar;
pub mod tape;
pub mod train;
pub mod verify;

pub use error::CoreError;
pub use scalar::Scalar;

/// Single-precision tensor handle.
pub type Tensor32 = tape::Tensor<f32>;
/// Double-precision tensor handle. All verification oracles use this width.
pub type Tensor64 = tape::Tensor<f64>;
/// Single-precision tape.
pub type Tape32 = tape::Tape<f32>;
/// Double-precision tape.
pub type Tape64 = tape::Tape<f64>;
