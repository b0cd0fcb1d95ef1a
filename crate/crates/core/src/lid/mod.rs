//! Local-intrinsic-dimensionality baseline detector.
//!
//! Each recorded layer contributes one feature: the maximum-likelihood LID
//! estimate of the sample's activation against the activations of a fixed
//! set of reference training images. By default only the reference images
//! are stored and their activations are recomputed for every query, which is
//! what the parameter accounting assumes; [`LidExtractor`] caches them.

mod estimator;
mod reference;

pub use estimator::{lid_estimate, lid_mle, LID_MAX};
pub use reference::{extract_lid_features, lid_feature_names, LidExtractor, LidReference, REFERENCE_COUNT};

/// Neighbour count for MNIST and CIFAR-10 models.
pub const DEFAULT_K: usize = 20;
/// Neighbour count for SVHN models.
pub const SVHN_K: usize = 30;
