//! Gradient-norm detection of adversarial and misclassified inputs.
//!
//! The crate bundles everything the detector needs end to end:
//!
//! * [`autodiff`]: a small tape-based reverse-mode engine over dense tensors.
//! * [`nn`]: layers, architectures, softmax cross-entropy and an SGD trainer.
//! * [`data`]: IDX ingestion and construction of balanced detection set-ups.
//! * [`attacks`]: FGSM, BIM (a/b), JSMA and Carlini-Wagner L2.
//! * [`gran`]: Gaussian smoothing, per-tensor gradient L1 features and the
//!   logistic-regression detector head.
//! * [`lid`]: the local-intrinsic-dimensionality baseline detector.
//! * [`eval`]: AUC-ROC, resource accounting and the benchmark/report driver.

// `as f64` on `Real` is a no-op only without the `f32` feature.
#![allow(clippy::unnecessary_cast)]

pub mod artifact;
pub mod attacks;
pub mod autodiff;
pub mod data;
mod error;
pub mod eval;
pub mod fingerprint;
pub mod gran;
pub mod lid;
pub mod nn;
mod tensor;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
